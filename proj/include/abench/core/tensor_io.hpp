// SPDX-License-Identifier: Apache-2.0
#pragma once

// Tensor file layout (all integers little-endian):
//   6 bytes  magic "UTNSR1"
//   u8       dtype code (0 = f32, 1 = f64)
//   u8       rank
//   rank x u64 dims
//   payload, row-major, product(dims) * sizeof(dtype) bytes
// An optional JSON sidecar lives next to the tensor at "<path>.json".

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "abench/core/array.hpp"
#include "abench/core/errors.hpp"

namespace abench {

static_assert(std::endian::native == std::endian::little, "tensor IO assumes a little-endian host");

inline constexpr char kTensorMagic[6] = {'U', 'T', 'N', 'S', 'R', '1'};

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::f32;
  else if constexpr (std::is_same_v<T, double>) return DType::f64;
  else static_assert(sizeof(T) == 0, "unsupported tensor element type");
}

inline std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

/// Type-erased tensor as read from disk; converted on demand.
struct RawTensor {
  DType dtype = DType::f64;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;  // widened copy of the payload
};

template <typename T, std::size_t R>
void write_tensor(std::ostream& os, const Array<T, R>& a) {
  os.write(kTensorMagic, 6);
  const auto code = static_cast<std::uint8_t>(dtype_of<T>());
  const auto rank = static_cast<std::uint8_t>(R);
  os.put(static_cast<char>(code));
  os.put(static_cast<char>(rank));
  for (std::size_t i = 0; i < R; ++i) {
    const std::uint64_t d = a.dim(i);
    os.write(reinterpret_cast<const char*>(&d), 8);
  }
  os.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(T)));
  if (!os) throw IoError("write_tensor: stream failure");
}

inline RawTensor read_raw_tensor(std::istream& is) {
  char magic[6];
  if (!is.read(magic, 6) || std::memcmp(magic, kTensorMagic, 6) != 0)
    throw DataError("read_tensor: bad magic");
  const int code = is.get();
  const int rank = is.get();
  if (!is || (code != 0 && code != 1)) throw DataError("read_tensor: bad dtype code");
  RawTensor t;
  t.dtype = static_cast<DType>(code);
  t.dims.resize(static_cast<std::size_t>(rank));
  std::uint64_t n = 1;
  for (auto& d : t.dims) {
    if (!is.read(reinterpret_cast<char*>(&d), 8)) throw DataError("read_tensor: truncated header");
    n *= d;
  }
  t.values.resize(n);
  if (t.dtype == DType::f32) {
    std::vector<float> buf(n);
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 4)))
      throw DataError("read_tensor: truncated payload");
    std::copy(buf.begin(), buf.end(), t.values.begin());
  } else if (!is.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(n * 8))) {
    throw DataError("read_tensor: truncated payload");
  }
  return t;
}

template <typename T, std::size_t R>
Array<T, R> to_array(const RawTensor& t) {
  if (t.dims.size() != R)
    throw ShapeError("tensor rank " + std::to_string(t.dims.size()) + ", expected " + std::to_string(R));
  typename Array<T, R>::Shape dims;
  for (std::size_t i = 0; i < R; ++i) dims[i] = static_cast<std::size_t>(t.dims[i]);
  std::vector<T> v(t.values.begin(), t.values.end());
  return Array<T, R>(dims, std::move(v));
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  return std::filesystem::path(p.string() + ".json");
}

template <typename T, std::size_t R>
void save_tensor(const std::filesystem::path& path, const Array<T, R>& a,
                 const nlohmann::json* sidecar = nullptr) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  write_tensor(os, a);
  if (sidecar) {
    std::ofstream js(sidecar_path(path));
    if (!js) throw IoError("cannot open for writing: " + sidecar_path(path).string());
    js << sidecar->dump(2) << '\n';
  }
}

inline RawTensor load_raw_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path.string());
  return read_raw_tensor(is);
}

template <typename T, std::size_t R>
Array<T, R> load_tensor(const std::filesystem::path& path) {
  return to_array<T, R>(load_raw_tensor(path));
}

/// Sidecar JSON or an empty object when absent.
inline nlohmann::json load_sidecar(const std::filesystem::path& path) {
  std::ifstream js(sidecar_path(path));
  if (!js) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad sidecar " + sidecar_path(path).string() + ": " + e.what());
  }
}

/// 64-bit FNV-1a, hex-encoded. Used for provenance only.
inline std::string fnv1a_hex(const void* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

template <typename T, std::size_t R>
std::string content_hash(const Array<T, R>& a) {
  return fnv1a_hex(a.data(), a.size() * sizeof(T));
}

inline std::string file_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return fnv1a_hex(buf.data(), buf.size());
}

}  // namespace abench

// SPDX-License-Identifier: Apache-2.0
// Desk-scale acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "abench/experiments.hpp"

using namespace abench;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point t0) { return seconds_since(t0); }

void note(const std::string& s) { std::cerr << "  " << s << '\n'; }

// ------------------------------------------------------------------ 1 ---

Outcome profile_statistics() {
  const auto t0 = std::chrono::steady_clock::now();
  const ProfileSpec base{50e-9, 6e-3, 0};
  double rms = 0, fwhm = 0;
  const int n = 1000;
  for (int s = 0; s < n; ++s) {
    ProfileSpec spec = base;
    spec.seed = static_cast<std::uint64_t>(s);
    const auto p = generate_profile(spec, 128, 0.3e-3);
    rms += measure_rms(p);
    fwhm += measure_acf_fwhm(p);
  }
  rms /= n;
  fwhm /= n;
  const double secs = elapsed(t0);
  const double erms = std::abs(rms / base.rms_target - 1), efwhm = std::abs(fwhm / base.acf_fwhm_target - 1);
  return {erms < 0.01 && efwhm < 0.05 && secs < 10,
          fmt("mean RMS %.4f ns (err %.2e), mean FWHM %.4f mm (err %.4f), %.2f s", rms * 1e9, erms, fwhm * 1e3, efwhm,
              secs)};
}

// ------------------------------------------------------------------ 2 ---

Outcome das_oracle(const RunConfig& cfg) {
  const auto grid = cfg.image_grid();
  const auto zero = AberrationProfile::zeros(cfg.transducer.n_elements, cfg.transducer.pitch);
  ScattererPhantom point;
  point.scatterers = {{0.0, 30e-3, 1.0}};
  const auto env_pt =
      envelope(aberrated_image(simulate_fsa(point, cfg.transducer, cfg.sim), zero, zero, grid, cfg.beamform));
  std::size_t pr = 0, pc = 0;
  for (std::size_t r = 0; r < env_pt.dim(0); ++r)
    for (std::size_t c = 0; c < env_pt.dim(1); ++c)
      if (env_pt(r, c) > env_pt(pr, pc)) pr = r, pc = c;
  const double err = std::hypot(grid.x[pc] - 0.0, grid.z[pr] - 30e-3);
  const double half_lambda = 0.5 * cfg.transducer.sound_speed_nominal / cfg.transducer.center_freq;

  const auto speckle = make_speckle_phantom(cfg.phantom, cfg.density * 1e-6, {}, mix64(cfg.seed + 0x73706b));
  const auto env_sp =
      envelope(aberrated_image(simulate_fsa(speckle, cfg.transducer, cfg.sim), zero, zero, grid, cfg.beamform));
  const Rect clean{-10e-3, 10e-3, 20e-3, 40e-3};
  std::vector<double> v;
  for (std::size_t r = 0; r < grid.rows(); ++r)
    for (std::size_t c = 0; c < grid.cols(); ++c)
      if (clean.contains(grid.x[c], grid.z[r])) v.push_back(env_sp(r, c));
  const double snr = snr_samples(v);
  return {err <= half_lambda && std::abs(snr - 1.91) <= 0.10,
          fmt("point peak error %.3f mm (limit %.3f mm), speckle SNR %.3f (1.91 +- 0.10)", err * 1e3,
              half_lambda * 1e3, snr)};
}

// ------------------------------------------------------------------ 3 ---

Outcome degradation(const FsaCube& cube, const RunConfig& cfg) {
  const auto d = aberration_degradation(cube, cfg, 20, 60e-9, mix64(cfg.seed + 0x646567));
  const double dg = d.clean.gcnr_top - d.aberrated.gcnr_top;
  const double dc = d.clean.contrast_top - d.aberrated.contrast_top;
  return {dg >= 0.02 && dc >= 1.0,
          fmt("top cyst gCNR %.3f -> %.3f (drop %.3f), contrast %.2f -> %.2f dB (drop %.2f)", d.clean.gcnr_top,
              d.aberrated.gcnr_top, dg, d.clean.contrast_top, d.aberrated.contrast_top, dc)};
}

// ------------------------------------------------------------------ 4 ---

Array2D<double> random_net(std::size_t r, std::size_t c, CounterRng& g) {
  Array2D<double> a({r, c});
  for (auto& v : a.flat()) v = g.uniform(0.1, 0.9);
  return a;
}

double fd_error(const std::function<double(const Array2D<double>&)>& f, Array2D<double> x,
                const Array2D<double>& grad) {
  const double h = 1e-6;
  double worst = 0, scale = 0;
  std::vector<double> fd(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x.flat()[i];
    x.flat()[i] = x0 + h;
    const double fp = f(x);
    x.flat()[i] = x0 - h;
    const double fm = f(x);
    x.flat()[i] = x0;
    fd[i] = (fp - fm) / (2 * h);
    scale = std::max(scale, std::abs(fd[i]));
  }
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(grad.flat()[i] - fd[i]));
  return worst / scale;
}

double network_gradient_error() {
  nn::UNet<double> net(nn::UNetConfig{3, 3}, 5);
  auto g = CounterRng::stream(77, 1);
  for (auto& p : net.params())
    if (p.shape.size() == 1)
      for (auto& v : p.value) v = 0.1 * g.normal();
  nn::FeatureMap<double> x(1, 8, 8), w(1, 8, 8);
  for (auto& v : x.v) v = g.uniform();
  for (auto& v : w.v) v = g.normal();
  auto objective = [&] {
    const auto y = net.forward(x);
    double s = 0;
    for (std::size_t i = 0; i < y.v.size(); ++i) s += w.v[i] * y.v[i];
    return s;
  };
  nn::UNet<double>::Tape tape;
  net.forward(x, &tape);
  nn::Gradients<double> grads(net.params());
  net.backward(tape, w, grads);
  double worst = 0;
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    auto& val = net.params()[i].value;
    for (std::size_t j = 0; j < val.size(); j += 1 + val.size() / 12) {
      const double v0 = val[j], h = 1e-6;
      val[j] = v0 + h;
      const double fp = objective();
      val[j] = v0 - h;
      const double fm = objective();
      val[j] = v0;
      const double fd = (fp - fm) / (2 * h), an = grads.g[i][j];
      worst = std::max(worst, std::abs(an - fd) / std::max(1e-6, std::max(std::abs(fd), std::abs(an))));
    }
  }
  return worst;
}

Outcome loss_identities() {
  double id_err = 0, grad_err = 0;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    auto g = CounterRng::stream(trial, 0x6c6f7373);
    const auto t = random_net(8, 8, g), o = random_net(8, 8, g);
    const auto tm = NetTransform::for_lambda(g.uniform(0.6, 1.4), g.uniform(0.5, 4));
    const auto om = NetTransform::for_lambda(tm.lambda, g.uniform(0.5, 4));
    const std::size_t total = 1 + g.below(5000);
    const auto b = loss_bmode(t, tm, o, om);
    const auto m = loss_mse(t, o);
    const auto at0 = loss_adaptive_mixed(t, tm, o, om, {0, total});
    const auto at1 = loss_adaptive_mixed(t, tm, o, om, {total, total});
    id_err = std::max({id_err, std::abs(at0.value - b.value), std::abs(at1.value - m.value)});
    for (std::size_t i = 0; i < b.grad.size(); ++i)
      id_err = std::max({id_err, std::abs(at0.grad.flat()[i] - b.grad.flat()[i]),
                         std::abs(at1.grad.flat()[i] - m.grad.flat()[i])});
    const LossContext mid{g.below(total + 1), total};
    const auto mx = loss_adaptive_mixed(t, tm, o, om, mid);
    grad_err = std::max({grad_err,
                         fd_error([&](const Array2D<double>& x) { return loss_mse(t, x).value; }, o, m.grad),
                         fd_error([&](const Array2D<double>& x) { return loss_bmode(t, tm, x, om).value; }, o, b.grad),
                         fd_error([&](const Array2D<double>& x) { return loss_adaptive_mixed(t, tm, x, om, mid).value; },
                                  o, mx.grad)});
  }
  const double net_err = network_gradient_error();
  return {id_err <= 1e-12 && grad_err < 1e-3 && net_err < 1e-3,
          fmt("endpoint identity error %.2e, loss gradient FD error %.2e, network gradient FD error %.2e", id_err,
              grad_err, net_err)};
}

// ------------------------------------------------------------------ 5 ---

Outcome transform_round_trip(const FsaCube& cube, const RunConfig& cfg) {
  const auto grid = cfg.image_grid();
  const auto zero = AberrationProfile::zeros(cube.n_elements(), cube.xducer.pitch);
  const auto rf = downsample_lateral(aberrated_image(cube, zero, zero, grid, cfg.beamform));
  double worst = 0;
  for (double lambda : {0.7, 1.0, 1.3}) {
    const auto back = from_net_domain(to_net_domain_downsampled(rf, lambda));
    double num = 0, den = 0;
    for (std::size_t i = 0; i < rf.data.size(); ++i) {
      num = std::max(num, std::abs(static_cast<double>(back.data.flat()[i]) - rf.data.flat()[i]));
      den = std::max(den, std::abs(static_cast<double>(rf.data.flat()[i])));
    }
    worst = std::max(worst, num / den);
  }
  double yj = 0;
  auto g = CounterRng::stream(5, 5);
  for (int i = 0; i < 10000; ++i) {
    const double x = g.uniform(-1, 1);
    yj = std::max(yj, std::abs(yeo_johnson(x, 1.0) - x));
  }
  const double ftol = std::numeric_limits<float>::epsilon();
  return {worst < 1e-5 && yj <= ftol,
          fmt("round-trip relative error %.2e, Yeo-Johnson lambda=1 deviation %.2e", worst, yj)};
}

// ------------------------------------------------------------------ 6 ---

Outcome pilot(const FsaCube& cube, const RunConfig& cfg, nlohmann::json& report) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = run_pilot(cube, cfg, note);
  const double secs = elapsed(t0);
  report["pilot"] = res.to_json();
  const double gain = res.mixed.gcnr_top - res.input.gcnr_top;
  return {gain >= 0.03 && res.mixed.gcnr_top > res.mse.gcnr_top && secs < 1800,
          fmt("held-out top cyst gCNR input %.3f, mixed %.3f (gain %.3f), MSE-only %.3f, %.0f s", res.input.gcnr_top,
              res.mixed.gcnr_top, gain, res.mse.gcnr_top, secs)};
}

// ------------------------------------------------------------------ 7 ---

Outcome main_study(const FsaCube& cube, const RunConfig& cfg, nlohmann::json& report) {
  const auto res = run_main_study(cube, cfg, nullptr, note);
  report["main"] = res.to_json();
  auto mean_gcnr = [](const SuiteReport& s) {
    double m = 0;
    for (const auto& r : s.rows) m += r.gcnr.mean;
    return m / static_cast<double>(s.rows.size());
  };
  const double gin = mean_gcnr(res.input), gout = mean_gcnr(res.output);
  const double sin = res.input.rows[0].speckle_snr.mean, sout = res.output.rows[0].speckle_snr.mean;
  return {gout > gin && std::abs(sout - sin) <= 0.15,
          fmt("mean cyst gCNR %.3f -> %.3f, speckle SNR %.3f -> %.3f (limit +-0.15), %.0f s", gin, gout, sin, sout,
              res.seconds)};
}

// ------------------------------------------------------------------ 8 ---

Outcome schedule_checks() {
  auto g = CounterRng::stream(8, 8);
  std::vector<std::vector<RfImage>> imgs(2);
  for (auto& r : imgs)
    for (int v = 0; v < 3; ++v) {
      RfImage im{Array2D<float>({32, 16}), {}};
      for (std::size_t c = 0; c < 16; ++c) im.grid.x.push_back(1e-4 * static_cast<double>(c));
      for (std::size_t k = 0; k < 32; ++k) im.grid.z.push_back(1e-2 + 4e-5 * static_cast<double>(k));
      for (auto& x : im.data.flat()) x = static_cast<float>(g.normal());
      r.push_back(std::move(im));
    }
  const auto ds = make_dataset(imgs, 1.0);
  TrainConfig tc;
  tc.epochs = 10;
  tc.lr_halving_epochs = {2, 5, 7};
  tc.batch_size = 2;
  tc.net = {2, 4};
  tc.patch_rows = 16;
  tc.validation_patches = 0;
  const auto hist = train(ds, tc).history;
  bool lr_ok = hist.epochs.size() == tc.epochs;
  for (std::size_t e = 0; lr_ok && e < tc.epochs; ++e) {
    const double prev = e ? hist.epochs[e - 1].lr : tc.lr_initial;
    const bool halves = std::find(tc.lr_halving_epochs.begin(), tc.lr_halving_epochs.end(), e) != tc.lr_halving_epochs.end();
    lr_ok = hist.epochs[e].lr == (halves ? prev / 2 : prev);
  }
  const double mid_alpha = hist.epochs.at(tc.epochs / 2).alpha;
  return {lr_ok && mid_alpha == 0.5,
          fmt("learning rate halves exactly at epochs 2/5/7: %s, alpha at epoch %zu = %.17g", lr_ok ? "yes" : "no",
              tc.epochs / 2, mid_alpha)};
}

// ------------------------------------------------------------------ 9 ---

Outcome partitioned(const FsaCube& cube, const RunConfig& cfg) {
  const auto grid = cfg.image_grid();
  const auto zero = AberrationProfile::zeros(cube.n_elements(), cube.xducer.pitch);
  const auto in = to_net_domain(aberrated_image(cube, zero, zero, grid, cfg.beamform), 1.0);
  Network net(cfg.train.net, 3);
  const auto env_whole = envelope_of(from_net_domain(infer(net, in)).data);
  const Network* nets[] = {&net, &net, &net};
  const DepthPartition part;
  const auto out = infer_partitioned(nets, part, in);
  double peak = 0, worst = 0;
  for (double v : env_whole.flat()) peak = std::max(peak, v);
  for (std::size_t i = 0; i < env_whole.size(); ++i)
    worst = std::max(worst, std::abs(env_whole.flat()[i] - out.envelope.flat()[i]));
  const std::size_t H = in.data.dim(0), o = part.overlap_rows(H);
  const auto secs = part.sections(H);
  bool bands = o == static_cast<std::size_t>(std::llround(0.03 * static_cast<double>(H)));
  for (std::size_t k = 1; k < secs.size(); ++k) bands = bands && secs[k - 1].end - secs[k].begin == o;
  return {worst / peak < 1e-5 && bands,
          fmt("max envelope deviation %.2e of peak, overlap %zu of %zu rows (3%% = %.2f)", worst / peak, o, H,
              0.03 * static_cast<double>(H))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale acceptance run"};
  std::string config, report_path;
  std::vector<int> only;
  app.add_option("--config", config, "key = value overrides")->check(CLI::ExistingFile);
  app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 9));
  app.add_option("--report", report_path, "Write measured values as JSON");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> sel(only.begin(), only.end());
  auto want = [&](int k) { return sel.empty() || sel.count(k); };

  const auto cfg = config.empty() ? RunConfig{} : RunConfig::load(config);
  std::optional<FsaCube> cube;
  auto cyst = [&]() -> const FsaCube& {
    if (!cube) cube = simulate_cyst(cfg, cfg.seed);
    return *cube;
  };

  nlohmann::json report;
  int failures = 0;
  auto run = [&](int k, const char* name, const std::function<Outcome()>& f) {
    if (!want(k)) return;
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    report[std::to_string(k)] = {{"name", name}, {"pass", o.pass}, {"detail", o.detail}};
    std::cout << "criterion " << k << " (" << name << "): " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
              << std::endl;
    failures += !o.pass;
  };
  run(1, "profile statistics", profile_statistics);
  run(2, "DAS oracle", [&] { return das_oracle(cfg); });
  run(3, "aberration degrades", [&] { return degradation(cyst(), cfg); });
  run(4, "loss identities", loss_identities);
  run(5, "transform round-trip", [&] { return transform_round_trip(cyst(), cfg); });
  run(6, "single-scene study", [&] { return pilot(cyst(), cfg, report); });
  run(7, "generalization study", [&] { return main_study(cyst(), cfg, report); });
  run(8, "schedule checks", schedule_checks);
  run(9, "partitioned inference", [&] { return partitioned(cyst(), cfg); });
  if (!report_path.empty()) std::ofstream(report_path) << report.dump(2) << '\n';
  return failures ? 1 : 0;
}

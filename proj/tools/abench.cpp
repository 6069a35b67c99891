// SPDX-License-Identifier: Apache-2.0
//
// abench: command-line front end for the aberration pipeline.
//
// Exit codes: 0 success, 2 usage or parameter error, 3 data/shape/IO error,
// 4 numeric divergence, 1 anything else.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "abench/aberration_profile.hpp"
#include "abench/acoustic_sim.hpp"
#include "abench/artifacts.hpp"
#include "abench/beamformer.hpp"
#include "abench/bmode_pipeline.hpp"
#include "abench/config.hpp"
#include "abench/core/parallel.hpp"
#include "abench/dataset.hpp"
#include "abench/experiments.hpp"
#include "abench/metrics.hpp"
#include "abench/trainer.hpp"
#include "abench/wavefront_synthesis.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace abench;

namespace {

struct Common {
  std::string config_path;
  int threads = 0;
  std::vector<std::string> argv;

  RunConfig config() const { return config_path.empty() ? RunConfig{} : RunConfig::load(config_path); }

  /// Provenance block stored in every sidecar.
  json provenance(const RunConfig& cfg, const std::vector<std::string>& inputs) const {
    json in = json::object();
    for (const auto& p : inputs) in[p] = file_hash(p);
    return {{"command", argv}, {"config", cfg.to_json()}, {"inputs", in}};
  }
};

void log(const std::string& s) { std::cerr << s << '\n'; }

std::vector<fs::path> tensor_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".tnsr") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

/// Realizations are subdirectories of `dir` holding version images; a
/// directory without subdirectories is a single realization.
std::vector<std::vector<fs::path>> realization_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) subdirs.push_back(e.path());
  std::sort(subdirs.begin(), subdirs.end());
  if (subdirs.empty()) subdirs.push_back(dir);
  std::vector<std::vector<fs::path>> out;
  for (const auto& d : subdirs) {
    std::vector<fs::path> imgs;
    for (const auto& f : tensor_files(d))
      if (load_sidecar(f).value("kind", std::string{}) == "rf_image") imgs.push_back(f);
    if (!imgs.empty()) out.push_back(std::move(imgs));
  }
  if (out.empty()) throw DataError(dir.string() + ": no RF images found");
  return out;
}

std::vector<std::vector<RfImage>> load_realizations(const fs::path& dir) {
  std::vector<std::vector<RfImage>> out;
  for (const auto& files : realization_files(dir)) {
    std::vector<RfImage> v;
    for (const auto& f : files) v.push_back(load_rf_image(f));
    out.push_back(std::move(v));
  }
  return out;
}

RowRange parse_rows(const std::string& s) {
  if (s.empty()) return {};
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw RangeError("--rows expects begin:end");
  return {std::stoul(s.substr(0, colon)), std::stoul(s.substr(colon + 1))};
}

Array2D<double> envelope_input(const fs::path& p, bool* was_rf = nullptr) {
  auto im = load_image(p);
  if (was_rf) *was_rf = im.kind == "rf_image";
  if (im.kind == "envelope") return std::move(im.data);
  if (im.kind == "rf_image") return envelope_of(im.data);
  throw DataError(p.string() + ": expected an envelope or RF image");
}

ImageGrid grid_of(const fs::path& p) { return grid_from_json(load_sidecar(p).at("grid")); }

// -------------------------------------------------------------- commands ---

void add_profile(CLI::App& app, Common& common) {
  auto* cmd = app.add_subcommand("profile", "Generate a random phase-screen aberration profile");
  struct Opts {
    double rms_ns = 50, fwhm_mm = 6, pitch_mm = 0.3;
    std::uint64_t seed = 1;
    std::size_t elements = 128;
    bool allow = false;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--rms-ns", o->rms_ns, "RMS delay, ns")->capture_default_str();
  cmd->add_option("--fwhm-mm", o->fwhm_mm, "Autocorrelation FWHM, mm")->capture_default_str();
  cmd->add_option("--seed", o->seed)->capture_default_str();
  cmd->add_option("--elements", o->elements)->capture_default_str();
  cmd->add_option("--pitch-mm", o->pitch_mm)->capture_default_str();
  cmd->add_flag("--allow-out-of-range", o->allow, "Accept RMS/FWHM outside the tissue ranges");
  cmd->add_option("-o,--out", o->out)->required();
  cmd->callback([o, &common] {
    ProfileSpec spec{o->rms_ns * 1e-9, o->fwhm_mm * 1e-3, o->seed, o->allow};
    const auto prof = generate_profile(spec, o->elements, o->pitch_mm * 1e-3);
    json measured{{"rms", measure_rms(prof)}};
    try {
      measured["acf_fwhm"] = measure_acf_fwhm(prof);
    } catch (const DataError&) {
      measured["acf_fwhm"] = nullptr;
    }
    save_profile(o->out, prof,
                 {{"spec", {{"rms", spec.rms_target}, {"acf_fwhm", spec.acf_fwhm_target}, {"seed", spec.seed}}},
                  {"measured", measured},
                  {"provenance", common.provenance(common.config(), {})}});
    std::cout << measured.dump() << '\n';
  });
}

void add_sim(CLI::App& app, Common& common) {
  auto* cmd = app.add_subcommand("sim", "Simulate full-synthetic-aperture channel data");
  struct Opts {
    std::string phantom = "cyst", out;
    std::uint64_t seed = 1;
    std::optional<double> density_mm2;
    std::optional<std::size_t> inclusions;
    double point_x_mm = 0, point_z_mm = 30;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--phantom", o->phantom, "cyst | speckle | point")
      ->check(CLI::IsMember({"cyst", "speckle", "point"}))
      ->capture_default_str();
  cmd->add_option("--seed", o->seed)->capture_default_str();
  cmd->add_option("--density-mm2", o->density_mm2, "Scatterers per mm^2 (overrides config)");
  cmd->add_option("--inclusions", o->inclusions, "Random inclusions for the speckle phantom");
  cmd->add_option("--point-x-mm", o->point_x_mm)->capture_default_str();
  cmd->add_option("--point-z-mm", o->point_z_mm)->capture_default_str();
  cmd->add_option("-o,--out", o->out)->required();
  cmd->callback([o, &common] {
    auto cfg = common.config();
    const double density = o->density_mm2 ? *o->density_mm2 : cfg.density * 1e-6;
    ScattererPhantom ph;
    if (o->phantom == "cyst") {
      ph = make_cyst_test_phantom(o->seed, density);
    } else if (o->phantom == "speckle") {
      const std::size_t n = o->inclusions ? *o->inclusions : cfg.inclusions;
      ph = make_speckle_phantom(cfg.phantom, density, random_inclusions(o->seed, cfg.phantom, n), o->seed);
    } else {
      ph.scatterers.push_back({o->point_x_mm * 1e-3, o->point_z_mm * 1e-3, 1.0});
      ph.validate();
    }
    log("sim: " + std::to_string(ph.scatterers.size()) + " scatterers");
    const auto cube = simulate_fsa(ph, cfg.transducer, cfg.sim);
    save_cube(o->out, cube,
              {{"phantom", {{"kind", o->phantom}, {"seed", o->seed}, {"density_mm2", density},
                            {"scatterers", ph.scatterers.size()}}},
               {"provenance", common.provenance(cfg, {})}});
  });
}

void add_synth(CLI::App& app, Common& common) {
  auto* cmd = app.add_subcommand("synth", "Synthesize aberrated plane-wave data from an FSA cube");
  struct Opts {
    std::string cube, profile, out, out_dir;
    std::size_t versions = 0;
    std::uint64_t seed = 1;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--cube", o->cube)->required()->check(CLI::ExistingFile);
  cmd->add_option("--profile", o->profile, "Transmit profile (single mode); zero when omitted");
  cmd->add_option("-o,--out", o->out, "Channel data output (single mode)");
  cmd->add_option("--versions", o->versions, "Batch mode: number of random aberrated versions");
  cmd->add_option("--out-dir", o->out_dir, "Batch mode: directory for beamformed versions");
  cmd->add_option("--seed", o->seed, "Batch mode profile seed")->capture_default_str();
  cmd->callback([o, &common] {
    auto cfg = common.config();
    const auto cube = load_cube(o->cube);
    if (o->versions > 0) {
      if (o->out_dir.empty()) throw RangeError("--versions needs --out-dir");
      fs::create_directories(o->out_dir);
      VersionOptions vo = cfg.versions;
      vo.beamform = cfg.beamform;
      const auto grid = cfg.image_grid();
      const auto prov = common.provenance(cfg, {o->cube});
      for (std::size_t v = 0; v < o->versions; ++v) {
        const auto spec = version_spec(vo.ranges, o->seed, v);
        const auto tx = generate_profile(spec, cube.n_elements(), cube.xducer.pitch);
        const auto rx = vo.decouple_receive
                            ? generate_profile(version_spec(vo.ranges, o->seed, v, 0x7278), cube.n_elements(),
                                               cube.xducer.pitch)
                            : tx;
        std::ostringstream name;
        name << 'v' << std::setw(3) << std::setfill('0') << v;
        const fs::path base = fs::path(o->out_dir) / name.str();
        save_profile(base.string() + "_tx.profile", tx);
        const auto img = aberrated_image(cube, tx, rx, grid, cfg.beamform);
        save_image(base.string() + ".tnsr", img.data, grid, "rf_image",
                   {{"version", v},
                    {"transmit_profile_hash", content_hash(Array1D<double>({tx.delays.size()}, tx.delays))},
                    {"receive_profile_hash", content_hash(Array1D<double>({rx.delays.size()}, rx.delays))},
                    {"f_number", cfg.beamform.f_number},
                    {"sound_speed", cfg.beamform.sound_speed},
                    {"provenance", prov}});
        log("synth: version " + std::to_string(v + 1) + "/" + std::to_string(o->versions));
      }
      return;
    }
    if (o->out.empty()) throw RangeError("synth needs -o (single mode) or --versions/--out-dir (batch mode)");
    const auto prof = o->profile.empty() ? AberrationProfile::zeros(cube.n_elements(), cube.xducer.pitch)
                                         : load_profile(o->profile);
    std::vector<std::string> inputs{o->cube};
    if (!o->profile.empty()) inputs.push_back(o->profile);
    const auto ch = synthesize_planewave(cube, prof);
    save_channels(o->out, ch,
                  {{"profile_hash", content_hash(Array1D<double>({prof.delays.size()}, prof.delays))},
                   {"provenance", common.provenance(cfg, inputs)}});
  });
}

void add_beamform(CLI::App& app, Common& common) {
  auto* cmd = app.add_subcommand("beamform", "Delay-and-sum beamform plane-wave channel data");
  struct Opts {
    std::string channels, profile, out;
    std::optional<double> f_number;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--channels", o->channels)->required()->check(CLI::ExistingFile);
  cmd->add_option("--profile", o->profile, "Receive profile; zero when omitted");
  cmd->add_option("--f-number", o->f_number);
  cmd->add_option("-o,--out", o->out)->required();
  cmd->callback([o, &common] {
    auto cfg = common.config();
    if (o->f_number) cfg.beamform.f_number = *o->f_number;
    const auto ch = load_channels(o->channels);
    const auto prof = o->profile.empty() ? AberrationProfile::zeros(ch.n_elements(), cfg.transducer.pitch)
                                         : load_profile(o->profile);
    const auto grid = cfg.image_grid();
    const auto res = beamform(ch, prof, grid, cfg.beamform);
    if (res.coverage_warning())
      log("beamform: warning: " + std::to_string(res.out_of_record) + " samples fell outside the record");
    std::vector<std::string> inputs{o->channels};
    if (!o->profile.empty()) inputs.push_back(o->profile);
    save_image(o->out, res.image.data, grid, "rf_image",
               {{"f_number", cfg.beamform.f_number},
                {"sound_speed", cfg.beamform.sound_speed},
                {"profile_hash", content_hash(Array1D<double>({prof.delays.size()}, prof.delays))},
                {"out_of_record", res.out_of_record},
                {"provenance", common.provenance(cfg, inputs)}});
  });
}

void add_bmode(CLI::App& app, Common& common) {
  auto* cmd = app.add_subcommand("bmode", "Envelope and standardized log-compressed image");
  struct Opts {
    std::string rf, out, envelope_out;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--rf", o->rf)->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", o->out, "Standardized B-mode output")->required();
  cmd->add_option("--envelope-out", o->envelope_out, "Also write the linear envelope");
  cmd->callback([o, &common] {
    const auto rf = load_rf_image(o->rf);
    const auto env = envelope(rf);
    const auto prov = common.provenance(common.config(), {o->rf});
    save_image(o->out, bmode_from_envelope(env), rf.grid, "bmode", {{"provenance", prov}});
    if (!o->envelope_out.empty()) save_image(o->envelope_out, env, rf.grid, "envelope", {{"provenance", prov}});
  });
}

void add_metrics(CLI::App& app, Common& common) {
  auto* cmd = app.add_subcommand("metrics", "Contrast, gCNR and speckle SNR over one or more images");
  struct Opts {
    std::vector<std::string> images;
    std::string roi, out;
    bool table = false;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--image", o->images, "Envelope or RF images (repeatable)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--roi", o->roi, "Config file with roi.* keys");
  cmd->add_option("-o,--out", o->out, "Write the JSON report here");
  cmd->add_flag("--table", o->table, "Print a text table instead of JSON");
  cmd->callback([o, &common] {
    const auto cfg = o->roi.empty() ? common.config() : RunConfig::load(o->roi);
    std::vector<Array2D<double>> envs;
    const ImageGrid grid = grid_of(o->images.front());
    for (const auto& p : o->images) {
      envs.push_back(envelope_input(p));
      if (grid_of(p).x != grid.x || grid_of(p).z != grid.z) throw ShapeError(p + ": grid differs from the first image");
    }
    const auto rep = evaluate_suite(envs, grid, {{"top", cfg.roi_top}, {"bottom", cfg.roi_bottom}});
    auto j = rep.to_json();
    if (!o->out.empty()) std::ofstream(o->out) << j.dump(2) << '\n';
    if (o->table) std::cout << rep.to_table();
    else std::cout << j.dump(2) << '\n';
  });
}

void add_train(CLI::App& app, Common& common) {
  auto* cmd = app.add_subcommand("train", "Train a version-to-version network");
  struct Opts {
    std::string data, out, history;
    std::optional<std::size_t> epochs;
    std::optional<double> lambda;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--data-dir", o->data, "Realization subdirectories of RF versions")->required();
  cmd->add_option("-o,--out", o->out, "Checkpoint")->required();
  cmd->add_option("--history", o->history, "History CSV");
  cmd->add_option("--epochs", o->epochs);
  cmd->add_option("--lambda", o->lambda, "Fixed Yeo-Johnson lambda instead of fitting");
  cmd->callback([o, &common] {
    auto cfg = common.config();
    if (o->epochs) {
      cfg.train.epochs = *o->epochs;
      std::erase_if(cfg.train.lr_halving_epochs, [&](std::size_t e) { return e >= *o->epochs; });
    }
    const auto imgs = load_realizations(o->data);
    std::vector<const RfImage*> fit;
    for (const auto& r : imgs)
      for (std::size_t v = 0; v < r.size(); ++v)
        if (!cfg.train.hold_out_last || v + 1 < r.size()) fit.push_back(&r[v]);
    const double lambda = o->lambda ? *o->lambda : fit_lambda(fit);
    log("train: lambda " + std::to_string(lambda));
    const auto ds = make_dataset(imgs, lambda);
    auto res = train(ds, cfg.train, [](const EpochRecord& r) {
      log("epoch " + std::to_string(r.epoch) + " loss " + std::to_string(r.loss) + " alpha " +
          std::to_string(r.alpha) + " lr " + std::to_string(r.lr));
    });
    save_checkpoint(o->out, res.model, {{"provenance", common.provenance(cfg, {})}, {"data_dir", o->data}});
    if (!o->history.empty()) res.history.write_csv(o->history);
  });
}

void add_finetune(CLI::App& app, Common& common) {
  auto* cmd = app.add_subcommand("finetune", "Continue training at the fine-tune learning rate");
  struct Opts {
    std::string model, data, out, history, rows;
    std::optional<std::size_t> section;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--model", o->model)->required()->check(CLI::ExistingFile);
  cmd->add_option("--data-dir", o->data)->required();
  cmd->add_option("-o,--out", o->out)->required();
  cmd->add_option("--history", o->history);
  cmd->add_option("--rows", o->rows, "Restrict patches to rows begin:end");
  cmd->add_option("--section", o->section, "Restrict patches to one depth section");
  cmd->callback([o, &common] {
    auto cfg = common.config();
    auto model = load_checkpoint(o->model);
    const auto ds = make_dataset(load_realizations(o->data), model.lambda);
    FinetuneConfig ft = cfg.finetune;
    ft.rows = parse_rows(o->rows);
    if (o->section) {
      const auto secs = cfg.partition.sections(ds.rows());
      if (*o->section >= secs.size()) throw RangeError("--section out of range");
      ft.rows = {secs[*o->section].begin, secs[*o->section].end};
    }
    TrainConfig tc = cfg.train;
    tc.net = model.net.config();
    const auto hist = finetune(model, ds, tc, ft, [](const EpochRecord& r) {
      log("finetune epoch " + std::to_string(r.epoch) + " loss " + std::to_string(r.loss) + " alpha " +
          std::to_string(r.alpha));
    });
    save_checkpoint(o->out, model, {{"provenance", common.provenance(cfg, {o->model})}});
    if (!o->history.empty()) hist.write_csv(o->history);
  });
}

void add_infer(CLI::App& app, Common& common) {
  auto* cmd = app.add_subcommand("infer", "Apply one model, or one model per depth section");
  struct Opts {
    std::vector<std::string> models;
    std::string rf, out, envelope_out;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--model", o->models, "Checkpoint (once, or once per section)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--rf", o->rf)->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", o->out, "Corrected RF image (laterally downsampled grid)")->required();
  cmd->add_option("--envelope-out", o->envelope_out);
  cmd->callback([o, &common] {
    const auto cfg = common.config();
    std::vector<Model> models;
    for (const auto& m : o->models) models.push_back(load_checkpoint(m));
    const auto in = to_net_domain(load_rf_image(o->rf), models.front().lambda);
    std::vector<std::string> inputs = o->models;
    inputs.push_back(o->rf);
    const auto prov = common.provenance(cfg, inputs);
    RfImage rf;
    Array2D<double> env;
    if (models.size() == 1) {
      rf = from_net_domain(infer(models.front().net, in));
      env = envelope(rf);
    } else {
      std::vector<const Network*> nets;
      for (const auto& m : models) nets.push_back(&m.net);
      DepthPartition part = cfg.partition;
      part.n_sections = nets.size();
      auto res = infer_partitioned(nets, part, in);
      rf = std::move(res.rf);
      env = std::move(res.envelope);
    }
    save_image(o->out, rf.data, rf.grid, "rf_image", {{"provenance", prov}});
    if (!o->envelope_out.empty()) save_image(o->envelope_out, env, rf.grid, "envelope", {{"provenance", prov}});
  });
}

void add_render(CLI::App& app, Common&) {
  auto* cmd = app.add_subcommand("render", "Render an envelope or RF image to an 8-bit PNG");
  struct Opts {
    std::string image, out;
    double dr = 50;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--image", o->image)->required()->check(CLI::ExistingFile);
  cmd->add_option("--dr", o->dr, "Dynamic range, dB")->capture_default_str();
  cmd->add_option("-o,--out", o->out)->required();
  cmd->callback([o] { render_png(envelope_input(o->image), o->dr, o->out); });
}

void add_repro(CLI::App& app, Common& common) {
  auto* cmd = app.add_subcommand("repro", "Run the desk-scale experiments and write a report");
  struct Opts {
    std::string out_dir = "repro";
    bool skip_main = false;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--out-dir", o->out_dir)->capture_default_str();
  cmd->add_flag("--skip-main", o->skip_main, "Only the degradation check and the single-scene study");
  cmd->callback([o, &common] {
    const auto cfg = common.config();
    fs::create_directories(o->out_dir);
    json report;
    report["config"] = cfg.to_json();
    log("repro: simulating the cyst scene");
    const auto cube = simulate_cyst(cfg, cfg.seed);
    const auto deg = aberration_degradation(cube, cfg, 20, 60e-9, cfg.seed);
    report["degradation"] = deg.to_json();
    const auto pilot = run_pilot(cube, cfg, log);
    report["single_scene"] = pilot.to_json();
    pilot.mixed_history.write_csv(fs::path(o->out_dir) / "single_scene_mixed.csv");
    pilot.mse_history.write_csv(fs::path(o->out_dir) / "single_scene_mse.csv");
    if (!o->skip_main) {
      Model model;
      const auto main = run_main_study(cube, cfg, &model, log);
      report["main"] = main.to_json();
      main.history.write_csv(fs::path(o->out_dir) / "main_history.csv");
      save_checkpoint(fs::path(o->out_dir) / "main.ckpt", model);
      std::cout << "aberrated input\n" << main.input.to_table() << "network output\n" << main.output.to_table();
    }
    std::ofstream(fs::path(o->out_dir) / "report.json") << report.dump(2) << '\n';
    std::cout << report["degradation"]["aberrated_mean"].dump() << '\n' << report["single_scene"].dump() << '\n';
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reference-free phase aberration correction pipeline"};
  app.require_subcommand(1);
  Common common;
  common.argv.assign(argv, argv + argc);
  app.add_option("--config", common.config_path, "key = value run configuration")->check(CLI::ExistingFile);
  app.add_option("--threads", common.threads, "Worker cap (0: ABENCH_THREADS or all cores)");
  app.parse_complete_callback([&] { set_max_threads(common.threads); });

  add_profile(app, common);
  add_sim(app, common);
  add_synth(app, common);
  add_beamform(app, common);
  add_bmode(app, common);
  add_metrics(app, common);
  add_train(app, common);
  add_finetune(app, common);
  add_infer(app, common);
  add_render(app, common);
  add_repro(app, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const RangeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

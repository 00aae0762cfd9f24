#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "mpmflow/cli/bench.hpp"
#include "mpmflow/engine/snapshot.hpp"
#include "mpmflow/flow/flo_io.hpp"
#include "mpmflow/identify/identify.hpp"
#include "mpmflow/scene/scene.hpp"

#ifndef MPMFLOW_VERSION
#define MPMFLOW_VERSION "0.0.0"
#endif

namespace mpmflow::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kValidation = 2, kRuntime = 3 };

/// Environment variable naming the default output root.
inline constexpr const char* kOutEnv = "MPMFLOW_OUT";

inline fs::path default_out(const std::string& verb) {
  const char* root = std::getenv(kOutEnv);
  return fs::path(root && *root ? root : "mpmflow_out") / verb;
}

/// Thrown for bad command-line usage that CLI11 itself cannot detect.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string scene;
  std::string prior;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

inline MaterialPrior load_prior_opt(const std::string& path) { return path.empty() ? MaterialPrior{} : load_prior(path); }

inline BuiltScene load_built_scene(const CommonOptions& o, MaterialPrior* prior_out = nullptr) {
  SceneSpec spec = load_scene(o.scene);
  if (o.seed) spec.seed = *o.seed;
  if (o.threads < 0) throw UsageError("--threads must be non-negative");
  spec.config.threads = o.threads;
  MaterialPrior prior = load_prior_opt(o.prior);
  BuiltScene built = build_scene(spec, prior);
  if (prior_out) *prior_out = std::move(prior);
  return built;
}

inline fs::path out_dir(const CommonOptions& o, const std::string& verb) {
  fs::path dir = o.out.empty() ? default_out(verb) : fs::path(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

/// The material to identify: the named one, or the only one in the scene.
inline std::string pick_material(const BuiltScene& scene, const std::string& requested) {
  if (!requested.empty()) {
    if (scene.material_index(requested) < 0) throw ValidationError("scene has no material named '" + requested + "'");
    return requested;
  }
  if (scene.material_names.size() != 1)
    throw UsageError("scene has " + std::to_string(scene.material_names.size()) + " materials; pass --material");
  return scene.material_names.front();
}

inline ParamMask parse_param_list(const std::vector<std::string>& names, const MaterialModel<double>& m) {
  if (names.empty()) return m.params.active;
  ParamMask mask;
  for (const auto& n : names) {
    const auto p = param_from_name(n);
    if (!p) throw UsageError("unknown parameter '" + n + "'");
    mask.set(static_cast<std::size_t>(*p));
  }
  return mask;
}

inline std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& prefix, const std::string& ext) {
  if (!fs::is_directory(dir)) throw ValidationError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind(prefix, 0) == 0 && e.path().extension() == ext) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// ---------------------------------------------------------------------------

inline int cmd_simulate(const CommonOptions& o, std::ostream& out) {
  SceneSpec spec = load_scene(o.scene);
  if (o.seed) spec.seed = *o.seed;
  if (o.threads < 0) throw UsageError("--threads must be non-negative");
  spec.config.threads = o.threads;
  const MaterialPrior prior = load_prior_opt(o.prior);
  BuiltScene scene = build_scene(spec, prior);
  const fs::path dir = out_dir(o, "simulate");

  std::int64_t frame = 0;
  run<double>(
      scene.state, scene.config,
      [&](const SimState<double>& s) { write_snapshot_csv(take_snapshot(s), dir / frame_file_name(frame++)); },
      [&](const std::string& msg) { std::cerr << "warning: " << msg << "\n"; });

  ordered_json manifest;
  manifest["tool"] = "mpmflow";
  manifest["version"] = MPMFLOW_VERSION;
  manifest["command"] = "simulate";
  manifest["seed"] = spec.seed;
  manifest["threads"] = spec.config.threads;
  manifest["particles"] = scene.state.particles.size();
  manifest["frames"] = frame;
  manifest["scene"] = scene_to_json(spec);
  manifest["prior"] = prior_to_json(prior);
  write_json_file(manifest, dir / "manifest.json");
  out << "wrote " << frame << " frames (" << scene.state.particles.size() << " particles) to " << dir.string() << "\n";
  return kOk;
}

inline int cmd_synth_flow(const std::string& frames, const std::string& scene_path, const CommonOptions& o,
                          std::ostream& out) {
  Camera cam;
  SplatSettings splat;
  if (!scene_path.empty()) {
    const SceneSpec spec = load_scene(scene_path);
    cam = spec.camera;
    splat = spec.splat;
  } else if (fs::exists(fs::path(frames) / "manifest.json")) {
    const json m = read_json_file(fs::path(frames) / "manifest.json");
    if (m.contains("scene")) {
      const SceneSpec spec = scene_from_json(m.at("scene"));
      cam = spec.camera;
      splat = spec.splat;
    }
  }
  const auto files = sorted_files(frames, "frame_", ".csv");
  if (files.size() < 2)
    throw ValidationError("synth-flow needs at least 2 frames, found " + std::to_string(files.size()) + " in " + frames);
  const fs::path dir = out_dir(o, "synth-flow");
  Snapshot<double> prev = read_snapshot_csv(files[0]);
  for (std::size_t i = 1; i < files.size(); ++i) {
    Snapshot<double> cur = read_snapshot_csv(files[i]);
    char name[32];
    std::snprintf(name, sizeof name, "flow_%05zu.flo", i - 1);
    write_flo(synth_flow(prev, cur, cam, splat), dir / name);
    prev = std::move(cur);
  }
  out << "wrote " << files.size() - 1 << " flow fields to " << dir.string() << "\n";
  return kOk;
}

inline std::vector<FlowField<double>> read_flow_dir(const fs::path& dir) {
  std::vector<FlowField<double>> flows;
  for (const auto& f : sorted_files(dir, "flow_", ".flo")) flows.push_back(read_flo(f));
  return flows;
}

inline void print_errors(std::ostream& out, const std::vector<ParamError>& errors) {
  char line[160];
  for (const auto& e : errors) {
    const bool rel = transform_for(e.param).kind == TransformKind::Log;
    if (rel)
      std::snprintf(line, sizeof line, "Δ_%s = %.6g (%.2f%%)\n", std::string(param_name(e.param)).c_str(), e.absolute,
                    100.0 * e.relative);
    else
      std::snprintf(line, sizeof line, "Δ_%s = %.6g\n", std::string(param_name(e.param)).c_str(), e.absolute);
    out << line;
  }
}

struct IdentifyOptions {
  std::string observed;
  std::string material;
  std::vector<std::string> params;
  std::string truth;
  int iters = 100;
  double lr = 0.05;
  std::string loss = "flow";
};

inline int cmd_identify(const CommonOptions& o, const IdentifyOptions& io, std::ostream& out) {
  MaterialPrior prior;
  IdentificationProblem problem;
  problem.scene = load_built_scene(o, &prior);
  problem.material = pick_material(problem.scene, io.material);
  problem.optimize = parse_param_list(io.params, problem.model());
  if (io.iters < 0) throw UsageError("--iters must be non-negative");
  problem.optimizer.max_iters = io.iters;
  problem.optimizer.step = io.lr;
  problem.observed = read_flow_dir(io.observed);

  std::optional<MaterialModel<double>> truth;
  if (!io.truth.empty()) {
    const MaterialPrior t = load_prior(io.truth);
    auto it = t.find(problem.material);
    if (it == t.end()) throw ValidationError(io.truth + ": no entry for material '" + problem.material + "'");
    if (it->second.kind != problem.model().kind) throw ValidationError(io.truth + ": material type differs from the scene");
    truth = it->second;
  }

  IdentificationReport rep = compare_losses(problem, problem.model().params, io.loss);
  if (truth) rep.errors = parameter_errors(rep.final_params, truth->params, problem.optimize);
  const fs::path dir = out_dir(o, "identify");
  write_json_file(report_to_json(rep), dir / "report.json");

  char line[160];
  std::snprintf(line, sizeof line, "status %s after %d iterations, best loss %.6g (%.3g per valid pixel)\n",
                rep.status.c_str(), rep.iterations, rep.best_loss,
                rep.best_loss / std::max<double>(1.0, static_cast<double>(evaluate_value(problem, rep.final_params).valid_pixels)));
  out << line;
  if (!rep.message.empty()) out << rep.message << "\n";
  out << problem.material << " (" << to_string(rep.kind) << "):\n";
  for (auto p : active_list(problem.optimize)) {
    std::snprintf(line, sizeof line, "  %s = %.8g\n", std::string(param_name(p)).c_str(), rep.final_params[p]);
    out << line;
  }
  print_errors(out, rep.errors);
  out << "report: " << (dir / "report.json").string() << "\n";
  return kOk;
}

struct GradcheckOptions {
  std::string material;
  std::vector<std::string> params;
  double fd_step = 1e-5;
  double tolerance = 1e-3;
  double offset = 0.1;  ///< relative offset of the evaluation point from the prior
};

/// Offsets the evaluation point away from the observation parameters so the loss gradient is non-trivial.
inline MaterialParams<double> gradcheck_point(const MaterialParams<double>& p, const ParamMask& mask, double offset) {
  MaterialParams<double> q = p;
  for (auto k : active_list(mask)) {
    if (k == Param::Nu)
      q[k] = std::min(0.49, p[k] + 0.2 * offset);
    else if (k == Param::ThetaFric)
      q[k] = std::min(89.0, p[k] + 30.0 * offset);
    else
      q[k] = p[k] * (1.0 + offset);
  }
  return q;
}

inline int cmd_gradcheck(const CommonOptions& o, const GradcheckOptions& go, std::ostream& out) {
  if (!(go.fd_step > 0.0)) throw UsageError("--fd-step must be positive");
  if (!(go.tolerance > 0.0)) throw UsageError("--tol must be positive");
  IdentificationProblem problem;
  problem.scene = load_built_scene(o);
  problem.material = pick_material(problem.scene, go.material);
  problem.optimize = parse_param_list(go.params, problem.model());
  problem.observed = generate_observations(problem.scene, problem.material, problem.model());
  problem.validate();
  const auto rows = gradient_check(problem, gradcheck_point(problem.model().params, problem.optimize, go.offset), go.fd_step);

  bool ok = true;
  char line[200];
  std::snprintf(line, sizeof line, "%-10s  %14s  %16s  %16s  %10s  %s\n", "param", "value", "tangent", "finite-diff",
                "rel-err", "result");
  out << line;
  for (const auto& r : rows) {
    const bool pass = r.relative_error <= go.tolerance && r.mask_stable;
    ok = ok && pass;
    std::snprintf(line, sizeof line, "%-10s  %14.6g  %16.9g  %16.9g  %10.3g  %s%s\n",
                  std::string(param_name(r.param)).c_str(), r.value, r.tangent, r.finite_difference, r.relative_error,
                  pass ? "PASS" : "FAIL", r.mask_stable ? "" : " (mask unstable)");
    out << line;
  }
  return ok ? kOk : kRuntime;
}

struct BenchOptions {
  std::string suite;
  std::vector<std::string> cases;
  int jobs = 1;
  std::optional<int> iters;
};

inline int cmd_bench(const CommonOptions& o, const BenchOptions& bo, std::ostream& out) {
  if (bo.jobs < 1) throw UsageError("--jobs must be at least 1");
  BenchSuite suite = load_suite(bo.suite);
  if (!bo.cases.empty()) {
    std::vector<BenchCase> keep;
    for (const auto& name : bo.cases) {
      auto it = std::find_if(suite.cases.begin(), suite.cases.end(), [&](const BenchCase& c) { return c.name == name; });
      if (it == suite.cases.end()) throw ValidationError("suite has no case named '" + name + "'");
      keep.push_back(*it);
    }
    suite.cases = std::move(keep);
  }
  if (bo.iters)
    for (auto& c : suite.cases) c.iters = *bo.iters;
  const fs::path dir = out_dir(o, "bench");

  std::vector<BenchResult> results(suite.cases.size());
  std::mutex io_mutex;
  auto work = [&](std::size_t i) {
    results[i] = run_case(suite.cases[i], o.threads);
    const fs::path case_dir = dir / suite.cases[i].name;
    fs::create_directories(case_dir);
    if (results[i].report) {
      write_json_file(report_to_json(*results[i].report, true), case_dir / "report.json");
    }
    std::lock_guard lock(io_mutex);
    out << (results[i].passed ? "PASS " : "FAIL ") << results[i].name << "\n" << std::flush;
  };
  {
    std::vector<std::jthread> pool;
    std::atomic<std::size_t> next{0};
    for (int t = 0; t < std::min<int>(bo.jobs, static_cast<int>(suite.cases.size())); ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next++) < results.size();) work(i);
      });
  }

  write_json_file(bench_summary_json(results), dir / "summary.json");
  const std::string table = bench_summary_table(results);
  std::ofstream(dir / "summary.txt") << table;
  out << table;
  const bool all = std::all_of(results.begin(), results.end(), [](const BenchResult& r) { return r.passed; });
  return all ? kOk : kRuntime;
}

// ---------------------------------------------------------------------------

/// Parses `args` (without the program name) and runs the selected verb. Returns the exit code.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"mpmflow: differentiable MLS-MPM simulation and material identification from optical flow"};
  app.set_version_flag("--version", MPMFLOW_VERSION);
  app.require_subcommand(1);

  CommonOptions common;
  std::optional<std::uint64_t> seed;
  auto add_common = [&](CLI::App* sub, bool scene_required) {
    auto* s = sub->add_option("--scene", common.scene, "Scene JSON file")->check(CLI::ExistingFile);
    if (scene_required) s->required();
    sub->add_option("--prior", common.prior, "Material prior JSON file")->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, std::string("Output directory (default $") + kOutEnv + "/<verb>)");
    sub->add_option("--seed", seed, "Override the scene seed");
    sub->add_option("--threads", common.threads, "Worker threads; 0 runs the single-threaded reference path");
  };

  auto* sim = app.add_subcommand("simulate", "Run a scene and write frame_%05d.csv snapshots plus manifest.json");
  add_common(sim, true);

  std::string frames, flow_scene;
  auto* synth = app.add_subcommand("synth-flow", "Synthesize flow_%05d.flo files from consecutive frames");
  synth->add_option("--frames", frames, "Directory of frame_*.csv files")->required()->check(CLI::ExistingDirectory);
  synth->add_option("--scene", flow_scene, "Scene JSON for the camera (default: the frames' manifest)")
      ->check(CLI::ExistingFile);
  synth->add_option("--out", common.out, "Output directory");

  IdentifyOptions io;
  auto* ident = app.add_subcommand("identify", "Recover material parameters from observed flow");
  add_common(ident, true);
  ident->add_option("--observed", io.observed, "Directory of flow_*.flo files")->required()->check(CLI::ExistingDirectory);
  ident->add_option("--material", io.material, "Material to identify (default: the scene's only material)");
  ident->add_option("--params", io.params, "Parameters to optimize (default: all of the type)")->delimiter(',');
  ident->add_option("--truth", io.truth, "Ground-truth prior file for error reporting")->check(CLI::ExistingFile);
  ident->add_option("--iters", io.iters, "Iteration budget");
  ident->add_option("--lr", io.lr, "Adam step size in unconstrained space");
  ident->add_option("--loss", io.loss, "Guidance loss (only 'flow' is implemented)");

  GradcheckOptions go;
  auto* grad = app.add_subcommand("gradcheck", "Compare loss tangents with central finite differences");
  add_common(grad, true);
  grad->add_option("--material", go.material, "Material to check");
  grad->add_option("--params", go.params, "Parameters to check")->delimiter(',');
  grad->add_option("--fd-step", go.fd_step, "Relative finite-difference step");
  grad->add_option("--tol", go.tolerance, "Relative error tolerance");
  grad->add_option("--offset", go.offset, "Offset of the evaluation point from the prior");

  BenchOptions bo;
  std::optional<int> bench_iters;
  auto* bench = app.add_subcommand("bench", "Run the self-recovery benchmark suite");
  bench->add_option("--suite", bo.suite, "Suite JSON file")->required()->check(CLI::ExistingFile);
  bench->add_option("--out", common.out, "Output directory");
  bench->add_option("--threads", common.threads, "Worker threads per case");
  bench->add_option("--jobs", bo.jobs, "Cases run concurrently");
  bench->add_option("--case", bo.cases, "Run only the named cases");
  bench->add_option("--iters", bench_iters, "Override every case's iteration budget");

  std::vector<std::string> argv_store{"mpmflow"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }
  common.seed = seed;
  bo.iters = bench_iters;

  try {
    if (*sim) return cmd_simulate(common, out);
    if (*synth) return cmd_synth_flow(frames, flow_scene, common, out);
    if (*ident) return cmd_identify(common, io, out);
    if (*grad) return cmd_gradcheck(common, go, out);
    if (*bench) return cmd_bench(common, bo, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const NotImplementedError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace mpmflow::cli

#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mpmflow/identify/identify.hpp"
#include "mpmflow/identify/prior.hpp"
#include "mpmflow/scene/scene.hpp"

namespace mpmflow {

/// Acceptance bound on one recovered parameter.
struct ParamBound {
  double value = 0.0;
  bool relative = true;

  bool admits(const ParamError& e) const { return (relative ? e.relative : e.absolute) <= value; }
};

/// How the starting guess is derived from the truth.
struct Perturbation {
  double log_factor = 3.0;     ///< multiplies log-transformed parameters
  double nu_offset = 0.1;      ///< added to Poisson's ratio
  double theta_offset = 15.0;  ///< added to the friction angle, degrees
};

struct BenchCase {
  std::string name;
  std::filesystem::path scene;
  std::string material;
  MaterialModel<double> truth;
  ParamMask optimize;
  Perturbation perturbation;
  std::map<Param, ParamBound> bounds;
  int iters = 100;
  double step = 0.05;

  void validate() const {
    const std::string where = "bench." + name;
    validate_model(truth, where + ".truth");
    if (optimize.none()) throw ValidationError(where + ".optimize: empty");
    if ((optimize & ~required_params(truth.kind)).any())
      throw ValidationError(where + ".optimize: parameter not used by " + std::string(to_string(truth.kind)));
    for (const auto& [p, b] : bounds) {
      if (!(b.value > 0.0)) throw ValidationError(where + ".bounds." + std::string(param_name(p)) + ": must be positive");
      if (!optimize.test(static_cast<std::size_t>(p)))
        throw ValidationError(where + ".bounds." + std::string(param_name(p)) + ": parameter is not optimized");
    }
    if (iters < 0) throw ValidationError(where + ".iters: must be non-negative");
  }
};

struct BenchSuite {
  std::vector<BenchCase> cases;
};

/// Starting parameters: truth moved by the perturbation rule on every optimized parameter.
inline MaterialParams<double> perturb(const MaterialParams<double>& truth, const ParamMask& mask, const Perturbation& r) {
  MaterialParams<double> out = truth;
  for (auto p : active_list(mask)) {
    if (p == Param::Nu)
      out[p] = truth[p] + r.nu_offset;
    else if (p == Param::ThetaFric)
      out[p] = truth[p] + r.theta_offset;
    else
      out[p] = truth[p] * r.log_factor;
    if (auto why = param_range_violation(p, out[p])) throw ValidationError("perturbation leaves the valid range: " + *why);
  }
  return out;
}

inline BenchSuite suite_from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object() || !j.contains("cases") || !j.at("cases").is_array())
    throw ValidationError("suite.cases: expected an array");
  BenchSuite suite;
  Perturbation defaults;
  if (j.contains("perturbation")) {
    const json& p = j.at("perturbation");
    defaults.log_factor = detail::number_or(p, "log_factor", defaults.log_factor, "suite.perturbation");
    defaults.nu_offset = detail::number_or(p, "nu_offset", defaults.nu_offset, "suite.perturbation");
    defaults.theta_offset = detail::number_or(p, "theta_offset", defaults.theta_offset, "suite.perturbation");
  }
  for (std::size_t i = 0; i < j.at("cases").size(); ++i) {
    const json& c = j.at("cases")[i];
    const std::string path = "suite.cases[" + std::to_string(i) + "]";
    BenchCase bc;
    const json& name = detail::json_member(c, "name", path);
    if (!name.is_string()) throw ValidationError(path + ".name: expected a string");
    bc.name = name.get<std::string>();
    const json& scene = detail::json_member(c, "scene", path);
    if (!scene.is_string()) throw ValidationError(path + ".scene: expected a string");
    bc.scene = base_dir / scene.get<std::string>();
    const json& material = detail::json_member(c, "material", path);
    if (!material.is_string()) throw ValidationError(path + ".material: expected a string");
    bc.material = material.get<std::string>();
    bc.truth = material_from_json(detail::json_member(c, "truth", path), path + ".truth");
    if (c.contains("optimize")) {
      for (const auto& n : c.at("optimize")) {
        const auto p = n.is_string() ? param_from_name(n.get<std::string>()) : std::nullopt;
        if (!p) throw ValidationError(path + ".optimize: unknown parameter");
        bc.optimize.set(static_cast<std::size_t>(*p));
      }
    } else {
      bc.optimize = bc.truth.params.active;
    }
    bc.perturbation = defaults;
    if (c.contains("perturbation")) {
      const json& p = c.at("perturbation");
      bc.perturbation.log_factor = detail::number_or(p, "log_factor", defaults.log_factor, path + ".perturbation");
      bc.perturbation.nu_offset = detail::number_or(p, "nu_offset", defaults.nu_offset, path + ".perturbation");
      bc.perturbation.theta_offset = detail::number_or(p, "theta_offset", defaults.theta_offset, path + ".perturbation");
    }
    if (c.contains("bounds")) {
      const json& b = c.at("bounds");
      if (!b.is_object()) throw ValidationError(path + ".bounds: expected an object");
      for (auto it = b.begin(); it != b.end(); ++it) {
        const auto p = param_from_name(it.key());
        if (!p) throw ValidationError(path + ".bounds." + it.key() + ": unknown parameter");
        ParamBound bound;
        if (it.value().contains("relative")) {
          bound = {detail::json_number(it.value().at("relative"), path + ".bounds." + it.key()), true};
        } else if (it.value().contains("absolute")) {
          bound = {detail::json_number(it.value().at("absolute"), path + ".bounds." + it.key()), false};
        } else {
          throw ValidationError(path + ".bounds." + it.key() + ": expected relative or absolute");
        }
        bc.bounds[*p] = bound;
      }
    }
    if (c.contains("iters")) bc.iters = static_cast<int>(detail::number_or(c, "iters", bc.iters, path));
    if (c.contains("step")) bc.step = detail::number_or(c, "step", bc.step, path);
    bc.validate();
    suite.cases.push_back(std::move(bc));
  }
  return suite;
}

inline BenchSuite load_suite(const std::filesystem::path& path) {
  return suite_from_json(read_json_file(path), path.parent_path());
}

/// A case's identification problem with observations generated at the truth.
struct PreparedCase {
  IdentificationProblem problem;
  MaterialParams<double> initial;
};

inline PreparedCase prepare_case(const BenchCase& c, int threads = 0) {
  const SceneSpec spec = load_scene(c.scene);
  MaterialPrior prior{{c.material, c.truth}};
  PreparedCase out;
  out.problem.scene = build_scene(spec, prior);
  out.problem.scene.config.threads = threads;
  out.problem.material = c.material;
  out.problem.optimize = c.optimize;
  out.problem.optimizer.max_iters = c.iters;
  out.problem.optimizer.step = c.step;
  out.problem.observed = generate_observations(out.problem.scene, c.material, c.truth);
  out.initial = perturb(c.truth.params, c.optimize, c.perturbation);
  return out;
}

struct BenchResult {
  std::string name;
  MaterialType kind = MaterialType::Elastic;
  bool passed = false;
  std::string error;  ///< set when the case crashed
  std::optional<IdentificationReport> report;
  std::vector<std::pair<ParamError, std::optional<ParamBound>>> rows;
  double seconds = 0.0;
};

inline BenchResult run_case(const BenchCase& c, int threads = 0) {
  BenchResult r;
  r.name = c.name;
  r.kind = c.truth.kind;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    PreparedCase pc = prepare_case(c, threads);
    IdentificationReport rep = optimize(pc.problem, pc.initial);
    rep.errors = parameter_errors(rep.final_params, c.truth.params, c.optimize);
    r.passed = true;
    for (const auto& e : rep.errors) {
      std::optional<ParamBound> b;
      if (auto it = c.bounds.find(e.param); it != c.bounds.end()) {
        b = it->second;
        r.passed = r.passed && b->admits(e);
      }
      r.rows.emplace_back(e, b);
    }
    r.report = std::move(rep);
  } catch (const std::exception& e) {
    r.passed = false;
    r.error = e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline ordered_json bench_summary_json(const std::vector<BenchResult>& results) {
  ordered_json cases = ordered_json::array();
  std::size_t passed = 0;
  for (const auto& r : results) {
    ordered_json c;
    c["name"] = r.name;
    c["type"] = std::string(to_string(r.kind));
    c["passed"] = r.passed;
    c["seconds"] = r.seconds;
    if (!r.error.empty()) c["error"] = r.error;
    if (r.report) {
      c["status"] = r.report->status;
      c["iterations"] = r.report->iterations;
      c["best_loss"] = r.report->best_loss;
    }
    ordered_json params = ordered_json::object();
    for (const auto& [e, b] : r.rows) {
      ordered_json p;
      p["estimate"] = e.estimate;
      p["truth"] = e.truth;
      p["absolute"] = e.absolute;
      p["relative"] = e.relative;
      if (b) {
        p["bound"] = b->value;
        p["bound_kind"] = b->relative ? "relative" : "absolute";
        p["passed"] = b->admits(e);
      }
      params[std::string(param_name(e.param))] = p;
    }
    c["params"] = params;
    cases.push_back(c);
    passed += r.passed ? 1 : 0;
  }
  ordered_json j;
  j["cases"] = cases;
  j["passed"] = passed;
  j["total"] = results.size();
  return j;
}

/// One row per case: Delta per parameter (relative for log-scaled ones, absolute for nu and theta).
inline std::string bench_summary_table(const std::vector<BenchResult>& results) {
  auto delta = [](const ParamError& e, const std::optional<ParamBound>& b) {
    char buf[96];
    const bool rel = b ? b->relative : transform_for(e.param).kind == TransformKind::Log;
    if (rel)
      std::snprintf(buf, sizeof buf, "D_%s=%.2f%%", std::string(param_name(e.param)).c_str(), 100.0 * e.relative);
    else
      std::snprintf(buf, sizeof buf, "D_%s=%.3g", std::string(param_name(e.param)).c_str(), e.absolute);
    std::string s = buf;
    if (b) {
      std::snprintf(buf, sizeof buf, rel ? " (<=%.0f%%)" : " (<=%.3g)", rel ? 100.0 * b->value : b->value);
      s += buf;
    }
    return s;
  };
  std::size_t wname = 4, wtype = 4;
  for (const auto& r : results) {
    wname = std::max(wname, r.name.size());
    wtype = std::max(wtype, to_string(r.kind).size());
  }
  std::string out;
  char line[512];
  std::snprintf(line, sizeof line, "%-*s  %-*s  %-6s  %8s  %s\n", int(wname), "case", int(wtype), "type", "result",
                "seconds", "errors");
  out += line;
  for (const auto& r : results) {
    std::string cols;
    for (const auto& [e, b] : r.rows) cols += (cols.empty() ? "" : "  ") + delta(e, b);
    if (!r.error.empty()) cols = "error: " + r.error;
    std::snprintf(line, sizeof line, "%-*s  %-*s  %-6s  %8.1f  ", int(wname), r.name.c_str(), int(wtype),
                  std::string(to_string(r.kind)).c_str(), r.passed ? "PASS" : "FAIL", r.seconds);
    out += line + cols + "\n";
  }
  return out;
}

}  // namespace mpmflow

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mpmflow/constitutive/material.hpp"
#include "mpmflow/core/dual.hpp"
#include "mpmflow/core/error.hpp"
#include "mpmflow/engine/snapshot.hpp"
#include "mpmflow/engine/stepper.hpp"
#include "mpmflow/flow/synth.hpp"
#include "mpmflow/identify/prior.hpp"
#include "mpmflow/identify/transform.hpp"
#include "mpmflow/scene/scene.hpp"

namespace mpmflow {

struct OptimizerSettings {
  double step = 0.05;  ///< Adam step in unconstrained space
  int max_iters = 100;
  double tolerance = 1e-4;  ///< relative loss change counted as stalled
  int patience = 5;         ///< stalled iterations before stopping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int max_halvings = 5;
  double loss_floor = 1e-9;  ///< absolute loss treated as an exact fit
};

/// One material of a scene to identify from an observed flow sequence.
struct IdentificationProblem {
  BuiltScene scene;
  std::string material;
  ParamMask optimize;
  std::vector<FlowField<double>> observed;
  OptimizerSettings optimizer;

  int material_id() const {
    const int id = scene.material_index(material);
    if (id < 0) throw ValidationError("identify: scene has no material named '" + material + "'");
    return id;
  }
  const MaterialModel<double>& model() const {
    return scene.state.materials[static_cast<std::size_t>(material_id())];
  }
  std::int64_t expected_pairs() const {
    return snapshot_count(scene.config.n_steps, scene.config.output_stride) - 1;
  }

  void validate() const {
    const auto& m = model();
    if (optimize.none()) throw ValidationError("identify: no active parameter to optimize");
    if ((optimize & ~required_params(m.kind)).any())
      throw ValidationError("identify: optimized parameters must belong to the material type " +
                            std::string(to_string(m.kind)));
    if (static_cast<std::int64_t>(observed.size()) != expected_pairs())
      throw ValidationError("identify: " + std::to_string(observed.size()) + " observed flows but the scene emits " +
                            std::to_string(expected_pairs()) + " frame pairs");
    for (const auto& f : observed)
      if (!f.same_shape(scene.camera.width, scene.camera.height))
        throw ValidationError("identify: observed flow size does not match the camera");
  }
};

enum class EvalStatus { Ok, BlowUp };

struct Evaluation {
  EvalStatus status = EvalStatus::Ok;
  std::string message;
  double loss = 0.0;
  /// dLoss/dparam for each optimized parameter, in storage order.
  std::vector<double> gradient;
  std::size_t valid_pixels = 0;
  bool degenerate_overlap = false;
  /// Combined rasterization footprint of all frames (for mask-stability checks).
  std::uint64_t footprint = 0;

  bool ok() const { return status == EvalStatus::Ok; }
};

namespace detail {

template <class T>
SimState<T> cast_state(const SimState<double>& s) {
  SimState<T> out;
  out.time = s.time;
  out.step = s.step;
  out.particles.reserve(s.particles.size());
  for (const auto& p : s.particles) {
    Particle<T> q;
    q.id = p.id;
    q.x = vec_cast<T>(p.x);
    q.v = vec_cast<T>(p.v);
    q.F = mat_cast<T>(p.F);
    q.C = mat_cast<T>(p.C);
    q.mass = p.mass;
    q.volume0 = p.volume0;
    q.material_id = p.material_id;
    out.particles.push_back(q);
  }
  for (const auto& m : s.materials) out.materials.push_back(model_cast<T>(m));
  return out;
}

/// Simulates the scene and streams each frame pair's synthesized flow to `on_flow`.
template <class T>
void simulate_flows(SimState<T> state, const BuiltScene& scene,
                    const std::function<void(std::size_t, const FlowField<T>&, const SplatFootprint&)>& on_flow) {
  std::optional<Snapshot<T>> prev;
  std::size_t pair = 0;
  run<T>(
      state, scene.config,
      [&](const SimState<T>& s) {
        Snapshot<T> cur = take_snapshot(s);
        if (prev) {
          SplatFootprint fp;
          const FlowField<T> f = synth_flow(*prev, cur, scene.camera, scene.splat, &fp);
          on_flow(pair++, f, fp);
        }
        prev = std::move(cur);
      },
      [](const std::string&) {});
}

template <class T>
Evaluation evaluate_typed(const IdentificationProblem& problem, const MaterialParams<T>& params) {
  Evaluation ev;
  SimState<T> state = cast_state<T>(problem.scene.state);
  state.materials[static_cast<std::size_t>(problem.material_id())].params = params;
  FlowLoss<T> acc;
  std::uint64_t fp_hash = 1469598103934665603ull;
  try {
    simulate_flows<T>(std::move(state), problem.scene, [&](std::size_t t, const FlowField<T>& f, const SplatFootprint& fp) {
      accumulate_flow_loss(acc, problem.observed.at(t), f);
      fp_hash = (fp_hash ^ fp.hash) * 1099511628211ull;
    });
  } catch (const SimulationBlowUp& e) {
    ev.status = EvalStatus::BlowUp;
    ev.message = e.what();
    return ev;
  }
  ev.loss = value_of(acc.value);
  for (int k = 0; k < tangent_count_v<T>; ++k) ev.gradient.push_back(tangent_of(acc.value, k));
  ev.valid_pixels = acc.valid_pixels;
  ev.degenerate_overlap = acc.degenerate_overlap;
  ev.footprint = fp_hash;
  return ev;
}

template <int N>
Evaluation evaluate_seeded(const IdentificationProblem& problem, const MaterialParams<double>& params) {
  MaterialParams<Dual<N>> seeded = params_cast<Dual<N>>(params);
  int slot = 0;
  for (auto p : active_list(problem.optimize)) seeded[p] = Dual<N>::variable(params[p], slot++);
  return evaluate_typed(problem, seeded);
}

}  // namespace detail

/// Runs simulate -> synthesize flow -> flow loss at `params`, with the loss
/// gradient over the problem's optimized parameters. A simulation blow-up is
/// reported through the status, not thrown.
inline Evaluation evaluate(const IdentificationProblem& problem, const MaterialParams<double>& params) {
  const auto n = problem.optimize.count();
  if (n == 0) throw ValidationError("evaluate: no active parameter carries a tangent");
  for (auto p : active_list(problem.optimize))
    if (auto why = param_range_violation(p, params[p])) throw ValidationError("evaluate: " + *why);
  switch (n) {
    case 1: return detail::evaluate_seeded<1>(problem, params);
    case 2: return detail::evaluate_seeded<2>(problem, params);
    case 3: return detail::evaluate_seeded<3>(problem, params);
    case 4: return detail::evaluate_seeded<4>(problem, params);
    default: throw ValidationError("evaluate: at most 4 parameters can be identified jointly");
  }
}

/// Loss only, without tangents.
inline Evaluation evaluate_value(const IdentificationProblem& problem, const MaterialParams<double>& params) {
  return detail::evaluate_typed<double>(problem, params);
}

/// Observed flows produced by simulating the scene with `model` bound to `material`.
inline std::vector<FlowField<double>> generate_observations(const BuiltScene& scene, const std::string& material,
                                                           const MaterialModel<double>& model) {
  const int id = scene.material_index(material);
  if (id < 0) throw ValidationError("generate_observations: scene has no material named '" + material + "'");
  SimState<double> state = scene.state;
  state.materials[static_cast<std::size_t>(id)] = model;
  std::vector<FlowField<double>> flows;
  detail::simulate_flows<double>(std::move(state), scene,
                                 [&](std::size_t, const FlowField<double>& f, const SplatFootprint&) { flows.push_back(f); });
  return flows;
}

/// Per-parameter absolute and relative error against a known truth.
struct ParamError {
  Param param;
  double estimate = 0.0;
  double truth = 0.0;
  double absolute = 0.0;
  double relative = 0.0;
};

struct IdentificationReport {
  std::string material;
  MaterialType kind = MaterialType::Elastic;
  ParamMask optimized;
  MaterialParams<double> initial;
  MaterialParams<double> final_params;  ///< best by loss
  std::vector<double> loss_trace;       ///< loss of every accepted iterate, in order
  std::vector<double> best_trace;       ///< running minimum of loss_trace
  double best_loss = 0.0;
  int iterations = 0;
  int blowups = 0;
  std::string status;  ///< converged | stalled | budget | halving_limit
  std::string message;
  double wall_seconds = 0.0;
  std::vector<ParamError> errors;  ///< filled only when a truth is supplied
};

inline std::vector<ParamError> parameter_errors(const MaterialParams<double>& estimate,
                                                const MaterialParams<double>& truth, const ParamMask& mask) {
  std::vector<ParamError> out;
  for (auto p : active_list(mask)) {
    ParamError e{p, estimate[p], truth[p], std::abs(estimate[p] - truth[p]), 0.0};
    e.relative = truth[p] != 0.0 ? e.absolute / std::abs(truth[p]) : e.absolute;
    out.push_back(e);
  }
  return out;
}

/// Adam descent on the flow loss in unconstrained parameter space, starting from `initial`.
///
/// A blow-up halves the step and retries from the last good iterate (at most
/// max_halvings times in a row). Stops on the iteration budget, an exact fit,
/// or `patience` consecutive iterations with |dLoss| < tolerance * loss.
inline IdentificationReport optimize(const IdentificationProblem& problem, const MaterialParams<double>& initial,
                                     const std::function<void(int, double)>& progress = nullptr) {
  problem.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto& cfg = problem.optimizer;
  const auto list = active_list(problem.optimize);
  const std::size_t n = list.size();

  IdentificationReport rep;
  rep.material = problem.material;
  rep.kind = problem.model().kind;
  rep.optimized = problem.optimize;
  rep.initial = initial;

  std::vector<double> z = to_unconstrained(initial, problem.optimize);
  MaterialParams<double> current = initial;
  Evaluation ev = evaluate(problem, current);
  if (!ev.ok())
    throw SimulationBlowUp("identify: the initial parameters already blow up (" + ev.message +
                           "); start from a different prior");

  std::vector<double> m(n, 0.0), v(n, 0.0);
  double best = std::numeric_limits<double>::infinity();
  MaterialParams<double> best_params = current;
  int stalled = 0;
  rep.status = "budget";

  for (int iter = 0;; ++iter) {
    for (auto p : list)
      if (auto why = param_range_violation(p, current[p]))
        throw Error("identify: optimizer left the admissible range: " + *why);
    rep.loss_trace.push_back(ev.loss);
    if (ev.loss < best) {
      best = ev.loss;
      best_params = current;
    }
    rep.best_trace.push_back(best);
    if (progress) progress(iter, ev.loss);
    rep.iterations = iter;

    if (ev.loss <= cfg.loss_floor) {
      rep.status = "converged";
      break;
    }
    if (iter > 0) {
      const double prev = rep.loss_trace[rep.loss_trace.size() - 2];
      stalled = std::abs(ev.loss - prev) < cfg.tolerance * ev.loss ? stalled + 1 : 0;
      if (stalled >= cfg.patience) {
        rep.status = "stalled";
        break;
      }
    }
    if (iter >= cfg.max_iters) break;

    std::vector<double> direction(n);
    const int t = iter + 1;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = ev.gradient[i] * from_unconstrained_derivative(list[i], z[i]);
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / (1.0 - std::pow(cfg.beta1, t));
      const double vhat = v[i] / (1.0 - std::pow(cfg.beta2, t));
      direction[i] = mhat / (std::sqrt(vhat) + cfg.epsilon);
    }

    double lr = cfg.step;
    int halvings = 0;
    bool accepted = false;
    while (true) {
      std::vector<double> z_try(n);
      for (std::size_t i = 0; i < n; ++i) z_try[i] = z[i] - lr * direction[i];
      const MaterialParams<double> trial = from_unconstrained(z_try, problem.optimize, current);
      Evaluation ev_try = evaluate(problem, trial);
      if (ev_try.ok()) {
        z = std::move(z_try);
        current = trial;
        ev = std::move(ev_try);
        accepted = true;
        break;
      }
      ++rep.blowups;
      if (++halvings > cfg.max_halvings) {
        rep.message = "step halved " + std::to_string(cfg.max_halvings) + " times without a stable simulation: " +
                      ev_try.message;
        break;
      }
      lr *= 0.5;
    }
    if (!accepted) {
      rep.status = "halving_limit";
      break;
    }
  }

  rep.final_params = best_params;
  rep.best_loss = best;
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Identification with a named guidance loss. Only optical flow is available.
inline IdentificationReport compare_losses(const IdentificationProblem& problem, const MaterialParams<double>& initial,
                                           const std::string& loss_kind) {
  if (loss_kind == "flow") return optimize(problem, initial);
  if (loss_kind == "render" || loss_kind == "sds")
    throw NotImplementedError("loss '" + loss_kind +
                              "' is not implemented: render and SDS guidance are out of scope; use --loss flow");
  throw NotImplementedError("unknown loss '" + loss_kind + "'; only 'flow' is implemented");
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradientCheckRow {
  Param param;
  double value = 0.0;
  double step = 0.0;
  double tangent = 0.0;
  double finite_difference = 0.0;
  double relative_error = 0.0;
  bool mask_stable = true;
};

inline double relative_difference(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

/// Compares loss tangents with central differences, step h = fd_step * max(1, |theta|).
/// If a perturbation changes the rasterization footprint the step shrinks tenfold (up to 3 times).
inline std::vector<GradientCheckRow> gradient_check(const IdentificationProblem& problem,
                                                    const MaterialParams<double>& params, double fd_step = 1e-5) {
  if (!(fd_step > 0.0)) throw ValidationError("gradient_check: fd step must be positive");
  const Evaluation center = evaluate(problem, params);
  if (!center.ok()) throw SimulationBlowUp(center.message);
  const auto list = active_list(problem.optimize);
  std::vector<GradientCheckRow> rows;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const Param p = list[i];
    GradientCheckRow row{p, params[p], 0.0, center.gradient[i], 0.0, 0.0, false};
    double h = fd_step * std::max(1.0, std::abs(params[p]));
    for (int attempt = 0; attempt < 4; ++attempt, h *= 0.1) {
      MaterialParams<double> plus = params, minus = params;
      plus[p] += h;
      minus[p] -= h;
      const Evaluation ep = evaluate_value(problem, plus);
      const Evaluation em = evaluate_value(problem, minus);
      if (!ep.ok() || !em.ok()) throw SimulationBlowUp("gradient_check: perturbed simulation blew up");
      row.step = h;
      row.finite_difference = (ep.loss - em.loss) / (2.0 * h);
      row.mask_stable = ep.footprint == center.footprint && em.footprint == center.footprint;
      if (row.mask_stable) break;
    }
    row.relative_error = relative_difference(row.tangent, row.finite_difference);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Report I/O

inline ordered_json params_json(const MaterialParams<double>& p, const ParamMask& mask) {
  ordered_json j = ordered_json::object();
  for (auto q : active_list(mask)) j[std::string(param_name(q))] = p[q];
  return j;
}

/// Timing is left out by default so reruns produce identical files.
inline ordered_json report_to_json(const IdentificationReport& r, bool with_timing = false) {
  ordered_json j;
  j["material"] = r.material;
  j["type"] = std::string(to_string(r.kind));
  ordered_json opt = ordered_json::array();
  for (auto p : active_list(r.optimized)) opt.push_back(std::string(param_name(p)));
  j["optimized"] = opt;
  j["status"] = r.status;
  if (!r.message.empty()) j["message"] = r.message;
  j["iterations"] = r.iterations;
  j["blowups"] = r.blowups;
  j["best_loss"] = r.best_loss;
  j["loss_trace"] = r.loss_trace;
  j["initial_params"] = params_json(r.initial, r.optimized);
  j["final_params"] = params_json(r.final_params, r.optimized | r.final_params.active);
  if (with_timing) j["wall_seconds"] = r.wall_seconds;
  if (!r.errors.empty()) {
    ordered_json e = ordered_json::object();
    for (const auto& pe : r.errors)
      e[std::string(param_name(pe.param))] = {
          {"estimate", pe.estimate}, {"truth", pe.truth}, {"absolute", pe.absolute}, {"relative", pe.relative}};
    j["errors"] = e;
  }
  return j;
}

inline IdentificationReport report_from_json(const json& j) {
  IdentificationReport r;
  try {
    r.material = j.at("material").get<std::string>();
    const auto kind = material_type_from_string(j.at("type").get<std::string>());
    if (!kind) throw ValidationError("report.type: unknown MaterialType");
    r.kind = *kind;
    for (const auto& name : j.at("optimized")) {
      const auto p = param_from_name(name.get<std::string>());
      if (!p) throw ValidationError("report.optimized: unknown parameter");
      r.optimized.set(static_cast<std::size_t>(*p));
    }
    r.status = j.at("status").get<std::string>();
    if (j.contains("message")) r.message = j.at("message").get<std::string>();
    r.iterations = j.at("iterations").get<int>();
    r.blowups = j.at("blowups").get<int>();
    r.best_loss = j.at("best_loss").get<double>();
    r.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    double best = std::numeric_limits<double>::infinity();
    for (double l : r.loss_trace) r.best_trace.push_back(best = std::min(best, l));
    auto read_params = [](const json& pj) {
      MaterialParams<double> p;
      for (auto it = pj.begin(); it != pj.end(); ++it) {
        const auto q = param_from_name(it.key());
        if (!q) throw ValidationError("report: unknown parameter " + it.key());
        p.set(*q, it.value().get<double>());
      }
      return p;
    };
    r.initial = read_params(j.at("initial_params"));
    r.final_params = read_params(j.at("final_params"));
    if (j.contains("wall_seconds")) r.wall_seconds = j.at("wall_seconds").get<double>();
    if (j.contains("errors")) {
      for (auto it = j.at("errors").begin(); it != j.at("errors").end(); ++it) {
        const auto q = param_from_name(it.key());
        if (!q) throw ValidationError("report.errors: unknown parameter " + it.key());
        const json& e = it.value();
        r.errors.push_back({*q, e.at("estimate").get<double>(), e.at("truth").get<double>(),
                            e.at("absolute").get<double>(), e.at("relative").get<double>()});
      }
      // Object keys come back sorted by name; restore storage order.
      std::sort(r.errors.begin(), r.errors.end(),
                [](const ParamError& a, const ParamError& b) { return a.param < b.param; });
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
  return r;
}

}  // namespace mpmflow

// Acceptance suite: one PASS/FAIL line per criterion.
//
//   mpmflow_acceptance            run everything
//   mpmflow_acceptance AC1 AC5    run the named criteria only

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mpmflow/cli/commands.hpp"
#include "mpmflow/constitutive/models.hpp"
#include "test_util.hpp"

using namespace mpmflow;
using testutil::model_for;
using testutil::TempDir;
using testutil::read_text;
using testutil::write_text;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "  failed: " << what << "\n";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path suite_path() { return fs::path(MPMFLOW_SOURCE_DIR) / "bench" / "suite.json"; }

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const char* kBlockTruth = R"({"block": {"type": "Elastic", "density": 1000, "params": {"E": 5e4, "nu": 0.3}}})";

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  return cli::run_cli(args, out, err);
}

// ---------------------------------------------------------------------------

void ac1_gradients(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  for (auto kind : kAllMaterialTypes) {
    const auto m = model_for(kind);
    SceneSpec spec = testutil::small_scene(m, 50, 10);
    spec.bodies[0].shape = BoxShape{{0.42, 0.1, 0.42}, {0.565, 0.245, 0.565}};
    IdentificationProblem pr;
    pr.scene = build_scene(spec, {});
    pr.material = "m";
    pr.optimize = m.params.active;
    pr.observed = generate_observations(pr.scene, "m", m);
    const auto rows = gradient_check(pr, cli::gradcheck_point(m.params, pr.optimize, 0.1));
    for (const auto& r : rows) {
      o.detail << fmt("  %-18s n=%zu %-10s tangent % .9e fd % .9e rel %.2e%s\n", std::string(to_string(kind)).c_str(),
                      pr.scene.state.particles.size(), std::string(param_name(r.param)).c_str(), r.tangent,
                      r.finite_difference, r.relative_error, r.mask_stable ? "" : " mask-unstable");
      o.require(r.mask_stable, std::string(to_string(kind)) + " mask stability");
      o.require(r.relative_error <= 1e-3, std::string(to_string(kind)) + " " + std::string(param_name(r.param)));
    }
  }
  const double t = seconds_since(t0);
  o.detail << fmt("  total %.1fs\n", t);
  o.require(t < 120.0, "runtime under 2 min");
}

void ac2_recovery(Outcome& o) {
  const BenchSuite suite = load_suite(suite_path());
  for (const auto& c : suite.cases) {
    const BenchResult r = run_case(c);
    o.detail << fmt("  %-22s %s %6.1fs", c.name.c_str(), r.passed ? "ok  " : "FAIL", r.seconds);
    if (!r.error.empty()) o.detail << " error: " << r.error;
    for (const auto& [e, b] : r.rows) {
      if (b && b->relative)
        o.detail << fmt("  D_%s=%.2f%%", std::string(param_name(e.param)).c_str(), 100.0 * e.relative);
      else
        o.detail << fmt("  D_%s=%.3g", std::string(param_name(e.param)).c_str(), e.absolute);
    }
    o.detail << "\n";
    o.require(r.passed, c.name + " within bounds");
    o.require(r.seconds < 600.0, c.name + " under 10 min");
  }
}

void ac3_conservation(Outcome& o) {
  double worst = 0.0;
  for (auto kind : kAllMaterialTypes) {
    auto spec = testutil::small_scene(model_for(kind), 200, 200);
    spec.config.boundaries.clear();
    spec.bodies[0].shape = BoxShape{{0.42, 0.55, 0.42}, {0.58, 0.71, 0.58}};
    ExternalForce push;
    push.kind = ForceKind::Impulse;
    push.vector = {0.02, 0.01, -0.01};
    push.region = {{0.0, 0.0, 0.0}, {1.0, 1.0, 0.5}};
    push.t_start = 0.002;
    push.t_end = 0.004;
    spec.config.forces = {push};
    auto b = build_scene(spec, {});
    const double mass0 = b.state.total_mass();
    Stepper<double> st(b.config);
    bool mass_exact = true;
    for (int k = 0; k < 200; ++k) {
      const auto p0 = b.state.total_momentum();
      const auto step = b.state.step;
      st.step(b.state);
      mass_exact = mass_exact && b.state.total_mass() == mass0;
      Vec3<double> expect = p0 + b.config.gravity * (b.config.dt * mass0);
      if (push.active_at(step, b.config.dt)) expect += push.vector / double(push.active_steps(b.config.dt).second);
      const double scale = std::max(norm(p0), norm(b.config.gravity * (b.config.dt * mass0)));
      worst = std::max(worst, norm(b.state.total_momentum() - expect) / scale);
    }
    o.require(mass_exact, std::string(to_string(kind)) + " mass constant");
  }
  o.detail << fmt("  worst relative momentum residual %.2e over 7 types x 200 steps\n", worst);
  o.require(worst <= 1e-8, "momentum balance within 1e-8");
}

void ac4_free_fall(Outcome& o) {
  SimConfig c;
  c.grid.resolution = {32, 32, 32};
  c.grid.dx = 1.0 / 32.0;
  c.dt = 1e-3;
  SimState<double> s;
  s.materials.push_back(model_for(MaterialType::Elastic));
  Particle<double> p;
  p.x = {0.5, 0.8, 0.5};
  p.mass = 1e-3;
  p.volume0 = 1e-6;
  s.particles.push_back(p);
  Stepper<double> stepper(c);
  double worst = 0.0, sum = 0.0;
  for (int n = 1; n <= 100; ++n) {
    stepper.step(s);
    sum += c.dt * (n * c.dt * c.gravity[1]);
    worst = std::max(worst, std::abs(s.particles[0].x[1] - (0.8 + sum)));
    worst = std::max(worst, std::abs(s.particles[0].v[1] - n * c.dt * c.gravity[1]));
  }
  o.detail << fmt("  max |x - x_closed| , |v - v_closed| = %.2e\n", worst);
  o.require(worst <= 1e-12, "free fall within 1e-12");
}

void ac5_constitutive(Outcome& o) {
  std::mt19937_64 rng(11);
  const Mat3<double> L0 = Mat3<double>::zero();
  double worst_rest = 0.0;
  for (auto kind : kAllMaterialTypes) {
    const auto p = model_for(kind).params;
    const double scale = kind == MaterialType::Sand                                                    ? kSandYoungsModulus
                         : (kind == MaterialType::NewtonianFluid || kind == MaterialType::NonNewtonianFluid)
                             ? std::max(p.kappa(), p.mu())
                             : p.E();
    worst_rest = std::max(worst_rest, testutil::max_abs(cauchy_stress(kind, p, Mat3<double>::identity(), L0)) / scale);
    for (int i = 0; i < 50; ++i)
      worst_rest = std::max(
          worst_rest, testutil::max_abs(cauchy_stress(kind, p, testutil::random_rotation(rng), L0)) / scale);
  }
  o.detail << fmt("  stress at F=I and rotations: %.2e (relative to stiffness)\n", worst_rest);
  o.require(worst_rest <= 1e-10, "zero stress at rest and rotations");

  double worst_idem = 0.0, worst_yield = 0.0;
  for (auto kind : {MaterialType::Plasticine, MaterialType::Metal, MaterialType::Sand}) {
    const auto p = model_for(kind).params;
    const double scale = kind == MaterialType::Sand ? 1.0 : p.tau_y();
    for (int i = 0; i < 200; ++i) {
      Mat3<double> F = testutil::random_near_identity(rng, 0.15);
      if (kind == MaterialType::Sand) F = F * 0.97;
      if (determinant(F) <= 0.0) continue;
      const Mat3<double> once = return_map(kind, p, F, 1e-3);
      const Mat3<double> twice = return_map(kind, p, once, 1e-3);
      worst_idem = std::max(worst_idem, testutil::max_abs(twice - once));
      worst_yield = std::max(worst_yield, yield_function(kind, p, once) / scale);
    }
  }
  o.detail << fmt("  return map: idempotence %.2e, yield excess %.2e\n", worst_idem, worst_yield);
  o.require(worst_idem <= 1e-8, "return-map idempotence");
  o.require(worst_yield <= 1e-8, "yield consistency");

  double worst_j = 0.0;
  const auto pn = model_for(MaterialType::NewtonianFluid).params;
  for (int i = 0; i < 200; ++i) {
    const Mat3<double> F = testutil::random_near_identity(rng, 0.3);
    const double J = determinant(F);
    if (J <= 0.0) continue;
    worst_j = std::max(worst_j, std::abs(determinant(return_map(MaterialType::NewtonianFluid, pn, F, 1e-3)) - J) / J);
  }
  o.detail << fmt("  Newtonian J preservation %.2e\n", worst_j);
  o.require(worst_j <= 1e-12, "Newtonian J preservation");
}

void ac6_determinism(Outcome& o) {
  TempDir dir("acceptance");
  const fs::path scene = fs::path(MPMFLOW_SOURCE_DIR) / "bench" / "scenes" / "elastic_block_drop.json";
  const std::string s = scene.string();
  write_text(dir / "truth.json", kBlockTruth);
  const std::string truth = (dir / "truth.json").string();
  o.require(cli({"simulate", "--scene", s, "--prior", truth, "--out", (dir / "a").string()}) == 0, "simulate run 1");
  o.require(cli({"simulate", "--scene", s, "--prior", truth, "--out", (dir / "b").string()}) == 0, "simulate run 2");
  std::size_t compared = 0;
  bool same = true;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    same = same && read_text(e.path()) == read_text(dir / "b" / e.path().filename());
    ++compared;
  }
  o.detail << "  simulate: " << compared << " files compared, " << (same ? "identical" : "DIFFERENT") << "\n";
  o.require(same && compared > 2, "simulate bit-identical");

  o.require(cli({"synth-flow", "--frames", (dir / "a").string(), "--out", (dir / "flow").string()}) == 0, "synth-flow");
  write_text(dir / "prior.json",
             R"({"block": {"type": "Elastic", "density": 1000, "params": {"E": 8e4, "nu": 0.33}}})");
  for (const char* out : {"ia", "ib"})
    o.require(cli({"identify", "--scene", s, "--prior", (dir / "prior.json").string(), "--observed",
                   (dir / "flow").string(), "--iters", "3", "--out", (dir / out).string()}) == 0,
              "identify run");
  const bool same_report = read_text(dir / "ia" / "report.json") == read_text(dir / "ib" / "report.json");
  o.detail << "  identify: report " << (same_report ? "identical" : "DIFFERENT") << "\n";
  o.require(same_report, "identify bit-identical");

  double worst = 0.0;
  for (auto kind : kAllMaterialTypes) {
    auto ref = build_scene(testutil::small_scene(model_for(kind), 100), {});
    auto par = ref;
    par.config.threads = 4;
    run<double>(ref.state, ref.config, nullptr);
    run<double>(par.state, par.config, nullptr);
    for (std::size_t i = 0; i < ref.state.particles.size(); ++i)
      for (std::size_t a = 0; a < 3; ++a) {
        const double r = ref.state.particles[i].x[a], q = par.state.particles[i].x[a];
        worst = std::max(worst, std::abs(r - q) / std::abs(r));
      }
  }
  o.detail << fmt("  parallel (4 threads) vs reference: max relative position difference %.2e\n", worst);
  o.require(worst <= 1e-10, "parallel within 1e-10");
}

void ac7_io(Outcome& o) {
  TempDir dir("acceptance");
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-40.0, 40.0);
  FlowField<double> f(37, 23);
  for (std::size_t i = 0; i < f.size(); ++i) {
    f.u[i] = static_cast<float>(u(rng));
    f.v[i] = static_cast<float>(u(rng));
    f.valid[i] = (i % 7) != 0;
    if (!f.valid[i]) f.u[i] = f.v[i] = 0.0;  // unknown pixels carry no value
  }
  write_flo(f, dir / "a.flo");
  const auto g = read_flo(dir / "a.flo");
  write_flo(g, dir / "b.flo");
  const bool flo_ok = g.u == f.u && g.v == f.v && g.valid == f.valid &&
                      read_text(dir / "a.flo") == read_text(dir / "b.flo");
  o.detail << "  .flo round trip: " << (flo_ok ? "bit-exact" : "MISMATCH") << "\n";
  o.require(flo_ok, ".flo round trip");

  const BenchSuite suite = load_suite(suite_path());
  bool scenes_ok = true;
  for (const auto& c : suite.cases) {
    const auto j = scene_to_json(load_scene(c.scene));
    scenes_ok = scenes_ok && scene_to_json(scene_from_json(json::parse(j.dump()))).dump() == j.dump();
  }
  MaterialPrior prior;
  for (const auto& c : suite.cases) prior[c.material] = c.truth;
  const auto pj = prior_to_json(prior);
  const bool prior_ok = prior_to_json(prior_from_json(json::parse(pj.dump()))).dump() == pj.dump();
  IdentificationReport rep;
  rep.material = "foam";
  rep.kind = MaterialType::Foam;
  rep.optimized = required_params(MaterialType::Foam);
  rep.initial = model_for(MaterialType::Foam).params;
  rep.final_params = rep.initial;
  rep.final_params[Param::Nu] = 0.1 + 0.2;
  rep.loss_trace = {5.0, 1.0 / 3.0};
  rep.best_loss = 1.0 / 3.0;
  rep.status = "budget";
  rep.errors = parameter_errors(rep.final_params, rep.initial, rep.optimized);
  const auto rj = report_to_json(rep);
  const bool report_ok = report_to_json(report_from_json(json::parse(rj.dump()))).dump() == rj.dump();
  o.detail << "  schemas: scene " << (scenes_ok ? "ok" : "MISMATCH") << ", prior " << (prior_ok ? "ok" : "MISMATCH")
           << ", report " << (report_ok ? "ok" : "MISMATCH") << "\n";
  o.require(scenes_ok && prior_ok && report_ok, "schema round trips");

  // Malformed inputs and their exit codes.
  const std::string scene = (fs::path(MPMFLOW_SOURCE_DIR) / "bench" / "scenes" / "elastic_block_drop.json").string();
  write_text(dir / "broken.json", "{\"grid\": ");
  write_text(dir / "bad.json", R"({"grid": {"resolution": [32, 32], "dx": 0.03}})");
  write_text(dir / "truth.json", kBlockTruth);
  const std::string truth = (dir / "truth.json").string();
  write_text(dir / "stiff.json", R"({"block": {"type": "Elastic", "density": 1000, "params": {"E": 1e13, "nu": 0.3}}})");
  fs::create_directories(dir / "flow");
  write_text(dir / "flow" / "flow_00000.flo", "PIEH");
  fs::create_directories(dir / "empty");
  struct Expect {
    std::vector<std::string> args;
    int code;
    const char* what;
  };
  const std::vector<Expect> cases = {
      {{"simulate", "--scene", (dir / "missing.json").string()}, 1, "missing scene file"},
      {{"simulate", "--scene", scene, "--threads", "-2", "--out", (dir / "o").string()}, 1, "negative threads"},
      {{"simulate", "--scene", (dir / "broken.json").string(), "--out", (dir / "o").string()}, 2, "truncated JSON"},
      {{"simulate", "--scene", (dir / "bad.json").string(), "--out", (dir / "o").string()}, 2, "invalid grid"},
      {{"identify", "--scene", scene, "--prior", truth, "--observed", (dir / "flow").string(), "--out",
        (dir / "o").string()},
       2, "truncated .flo"},
      {{"identify", "--scene", scene, "--prior", truth, "--observed", (dir / "empty").string(), "--out",
        (dir / "o").string()},
       2, "flow count mismatch"},
      {{"simulate", "--scene", scene, "--out", (dir / "o").string()}, 2, "scene without material"},
      {{"synth-flow", "--frames", (dir / "empty").string(), "--out", (dir / "o").string()}, 2, "fewer than 2 frames"},
  };
  for (const auto& e : cases) {
    const int got = cli(e.args);
    o.detail << fmt("  %-22s exit %d (expected %d)\n", e.what, got, e.code);
    o.require(got == e.code, e.what);
  }
  // Observations from a real run, then a prior that blows up on the first evaluation; and an unknown loss.
  o.require(cli({"simulate", "--scene", scene, "--prior", truth, "--out", (dir / "frames").string()}) == 0, "simulate");
  o.require(cli({"synth-flow", "--frames", (dir / "frames").string(), "--out", (dir / "obs").string()}) == 0,
            "synth-flow");
  const int blow = cli({"identify", "--scene", scene, "--prior", (dir / "stiff.json").string(), "--observed",
                        (dir / "obs").string(), "--out", (dir / "o").string()});
  const int sds = cli({"identify", "--scene", scene, "--prior", truth, "--observed", (dir / "obs").string(), "--loss",
                       "sds", "--out", (dir / "o").string()});
  o.detail << fmt("  %-22s exit %d (expected 3)\n  %-22s exit %d (expected 2)\n", "initial blow-up", blow,
                  "--loss sds", sds);
  o.require(blow == 3, "initial blow-up");
  o.require(sds == 2, "--loss sds");
}

Param dominant(MaterialType k) {
  switch (k) {
    case MaterialType::Sand: return Param::ThetaFric;
    case MaterialType::NewtonianFluid:
    case MaterialType::NonNewtonianFluid: return Param::Mu;
    default: return Param::E;
  }
}

void ac8_loss(Outcome& o) {
  const BenchSuite suite = load_suite(suite_path());
  for (const auto& c : suite.cases) {
    PreparedCase pc = prepare_case(c);
    const auto& pr = pc.problem;
    const auto truth = c.truth.params;
    const double at_truth = evaluate_value(pr, truth).loss;
    o.require(at_truth <= 1e-9, c.name + " loss at truth");
    const Param d = dominant(c.truth.kind);
    o.detail << fmt("  %-22s L(truth)=%.1e  %s:", c.name.c_str(), at_truth, std::string(param_name(d)).c_str());
    bool monotone = true;
    for (int side : {-1, 1}) {
      double prev = at_truth;
      for (int k = 1; k <= 5; ++k) {
        MaterialParams<double> q = truth;
        q[d] = truth[d] * (1.0 + side * 0.1 * k);
        const Evaluation ev = evaluate_value(pr, q);
        const double l = ev.ok() ? ev.loss : std::numeric_limits<double>::infinity();
        monotone = monotone && l > prev;
        prev = l;
        if (side > 0 || k == 5) o.detail << fmt(" %+d%%:%.3g", side * 10 * k, l);
      }
    }
    o.detail << "\n";
    o.require(monotone, c.name + " strictly increasing away from truth");
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"AC1", ac1_gradients},      {"AC2", ac2_recovery}, {"AC3", ac3_conservation}, {"AC4", ac4_free_fall},
      {"AC5", ac5_constitutive},   {"AC6", ac6_determinism}, {"AC7", ac7_io},        {"AC8", ac8_loss},
  };
  const char* titles[] = {"gradients match finite differences",
                          "self-recovery benchmark",
                          "mass and momentum conservation",
                          "free fall closed form",
                          "constitutive invariants",
                          "determinism",
                          "I/O fidelity and exit codes",
                          "loss sanity"};
  std::set<std::string> only(argv + 1, argv + argc);
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& [name, fn] = criteria[i];
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    std::printf("%s %s: %s (%.1fs)\n%s", name.c_str(), o.pass ? "PASS" : "FAIL", titles[i], seconds_since(t0),
                o.detail.str().c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mpmflow/cli/bench.hpp"
#include "mpmflow/identify/identify.hpp"
#include "test_util.hpp"

using namespace mpmflow;
using testutil::model_for;
using testutil::small_scene;

namespace {

IdentificationProblem self_problem(const MaterialModel<double>& m, std::int64_t steps = 50) {
  IdentificationProblem pr;
  pr.scene = build_scene(small_scene(m, steps), {});
  pr.material = "m";
  pr.optimize = m.params.active;
  pr.observed = generate_observations(pr.scene, "m", m);
  return pr;
}

}  // namespace

TEST(Transform, ReferencePoints) {
  EXPECT_EQ(to_unconstrained(Param::E, 1.0), 0.0);
  EXPECT_EQ(to_unconstrained(Param::Nu, 0.25), 0.0);
  EXPECT_EQ(to_unconstrained(Param::ThetaFric, 45.0), 0.0);
  EXPECT_EQ(from_unconstrained(Param::Nu, 0.0), 0.25);
  EXPECT_EQ(from_unconstrained(Param::ThetaFric, 0.0), 45.0);
  EXPECT_EQ(from_unconstrained(Param::Kappa, 0.0), 1.0);
}

TEST(Transform, RoundTrip) {
  const std::pair<Param, double> cases[] = {{Param::E, 3.7e5},   {Param::Nu, 0.3},    {Param::Nu, 0.01},
                                            {Param::TauY, 12.5}, {Param::Eta, 1e-3}, {Param::ThetaFric, 35.0},
                                            {Param::Mu, 2e3},    {Param::Kappa, 1e5}};
  for (auto [p, v] : cases) {
    const double back = from_unconstrained(p, to_unconstrained(p, v));
    EXPECT_NEAR(back, v, 1e-13 * v) << param_name(p);
  }
}

TEST(Transform, DerivativeMatchesFiniteDifference) {
  for (auto p : {Param::E, Param::Nu, Param::ThetaFric}) {
    for (double z : {-2.0, 0.0, 0.7, 3.0}) {
      const double h = 1e-6;
      const double fd = (from_unconstrained(p, z + h) - from_unconstrained(p, z - h)) / (2 * h);
      EXPECT_NEAR(from_unconstrained_derivative(p, z), fd, 1e-6 * std::max(1.0, std::abs(fd))) << param_name(p);
    }
  }
}

TEST(Transform, ExtremeCoordinatesStayAdmissible) {
  for (double z : {-1e6, -800.0, -40.0, 40.0, 800.0, 1e6}) {
    for (auto p : kAllParams) {
      const double v = from_unconstrained(p, z);
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_FALSE(param_range_violation(p, v).has_value()) << param_name(p) << " z=" << z << " v=" << v;
    }
  }
  EXPECT_LT(from_unconstrained(Param::Nu, 1e6), 0.5);
  EXPECT_GT(from_unconstrained(Param::E, -1e6), 0.0);
}

TEST(Transform, RejectsOutOfRange) {
  EXPECT_THROW(to_unconstrained(Param::E, 0.0), ValidationError);
  EXPECT_THROW(to_unconstrained(Param::E, -1.0), ValidationError);
  EXPECT_THROW(to_unconstrained(Param::Nu, 0.5), ValidationError);
  EXPECT_THROW(to_unconstrained(Param::ThetaFric, 90.0), ValidationError);
}

TEST(Transform, MaskedVectorsFollowStorageOrder) {
  MaterialParams<double> p = model_for(MaterialType::Foam).params;
  const ParamMask mask = mask_of({Param::Eta, Param::E});
  const auto z = to_unconstrained(p, mask);
  ASSERT_EQ(z.size(), 2u);
  EXPECT_DOUBLE_EQ(z[0], std::log(1e5));
  EXPECT_DOUBLE_EQ(z[1], std::log(50.0));
  const auto q = from_unconstrained({0.0, 0.0}, mask, p);
  EXPECT_EQ(q[Param::E], 1.0);
  EXPECT_EQ(q[Param::Eta], 1.0);
  EXPECT_EQ(q[Param::Nu], 0.3);
  EXPECT_THROW(from_unconstrained({0.0}, mask, p), ValidationError);
}

TEST(Perturb, BenchRule) {
  MaterialParams<double> t;
  t.set(Param::E, 1e5);
  t.set(Param::Nu, 0.3);
  t.set(Param::ThetaFric, 30.0);
  const auto p = perturb(t, mask_of({Param::E, Param::Nu, Param::ThetaFric}), Perturbation{3.0, 0.1, 15.0});
  EXPECT_DOUBLE_EQ(p[Param::E], 3e5);
  EXPECT_DOUBLE_EQ(p[Param::Nu], 0.4);
  EXPECT_DOUBLE_EQ(p[Param::ThetaFric], 45.0);
  EXPECT_THROW(perturb(t, mask_of({Param::Nu}), Perturbation{3.0, 0.25, 15.0}), ValidationError);
}

TEST(Problem, Validation) {
  auto pr = self_problem(model_for(MaterialType::Elastic), 20);
  EXPECT_NO_THROW(pr.validate());
  auto bad = pr;
  bad.optimize.reset();
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = pr;
  bad.optimize = mask_of({Param::TauY});
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = pr;
  bad.observed.pop_back();
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = pr;
  bad.material = "nope";
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = pr;
  bad.observed[0] = FlowField<double>(8, 8);
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Evaluate, SelfObservationHasZeroLoss) {
  for (auto kind : {MaterialType::Elastic, MaterialType::Sand, MaterialType::NonNewtonianFluid}) {
    const auto m = model_for(kind);
    auto pr = self_problem(m, 30);
    const auto ev = evaluate(pr, m.params);
    ASSERT_TRUE(ev.ok()) << ev.message;
    // The tangent-carrying run may differ from the plain one by rounding.
    EXPECT_LE(ev.loss, 1e-20) << to_string(kind);
    EXPECT_EQ(evaluate_value(pr, m.params).loss, 0.0) << to_string(kind);
    EXPECT_GT(ev.valid_pixels, 0u);
    for (double g : ev.gradient) EXPECT_LE(std::abs(g), 1e-12);
    EXPECT_EQ(ev.gradient.size(), active_list(pr.optimize).size());
  }
}

TEST(Evaluate, TangentAndValueAgree) {
  const auto m = model_for(MaterialType::Elastic);
  auto pr = self_problem(m, 30);
  auto q = m.params;
  q[Param::E] *= 1.3;
  const auto a = evaluate(pr, q);
  const auto b = evaluate_value(pr, q);
  ASSERT_TRUE(a.ok());
  EXPECT_GT(a.loss, 0.0);
  EXPECT_NEAR(a.loss, b.loss, 1e-12 * b.loss);
  EXPECT_EQ(a.footprint, b.footprint);
  EXPECT_TRUE(b.gradient.empty());
}

TEST(Evaluate, StiffnessBlowUpIsReportedNotThrown) {
  const auto m = model_for(MaterialType::Elastic);
  auto pr = self_problem(m, 30);
  auto q = m.params;
  q[Param::E] *= 1e6;
  const auto ev = evaluate(pr, q);
  EXPECT_EQ(ev.status, EvalStatus::BlowUp);
  EXPECT_FALSE(ev.message.empty());
}

TEST(Optimize, ExactPriorStopsAtIterationZero) {
  const auto m = model_for(MaterialType::Elastic);
  auto pr = self_problem(m, 30);
  const auto rep = optimize(pr, m.params);
  EXPECT_EQ(rep.status, "converged");
  EXPECT_EQ(rep.iterations, 0);
  EXPECT_LE(rep.best_loss, 1e-9);
  ASSERT_EQ(rep.loss_trace.size(), 1u);
}

TEST(Optimize, ShortRunDescends) {
  const auto m = model_for(MaterialType::Elastic);
  auto pr = self_problem(m, 50);
  pr.optimizer.max_iters = 12;
  auto start = m.params;
  start[Param::E] *= 2.0;
  start[Param::Nu] = 0.35;
  int calls = 0;
  const auto rep = optimize(pr, start, [&](int, double) { ++calls; });
  EXPECT_EQ(rep.status, "budget");
  EXPECT_EQ(rep.iterations, 12);
  EXPECT_EQ(calls, 13);
  ASSERT_EQ(rep.loss_trace.size(), 13u);
  ASSERT_EQ(rep.best_trace.size(), 13u);
  for (std::size_t i = 1; i < rep.best_trace.size(); ++i) EXPECT_LE(rep.best_trace[i], rep.best_trace[i - 1]);
  EXPECT_LT(rep.best_loss, 0.5 * rep.loss_trace.front());
  EXPECT_EQ(rep.best_loss, rep.best_trace.back());
  // E moves toward the truth.
  EXPECT_LT(std::abs(std::log(rep.final_params[Param::E] / 1e5)), std::log(2.0));
  EXPECT_EQ(rep.initial[Param::E], 2e5);
}

TEST(Optimize, StallStopsEarly) {
  const auto m = model_for(MaterialType::Elastic);
  auto pr = self_problem(m, 30);
  pr.optimizer.max_iters = 50;
  pr.optimizer.tolerance = 10.0;  // every change counts as a stall
  pr.optimizer.patience = 2;
  auto start = m.params;
  start[Param::E] *= 1.5;
  const auto rep = optimize(pr, start);
  EXPECT_EQ(rep.status, "stalled");
  EXPECT_EQ(rep.iterations, 2);
}

TEST(Optimize, InitialBlowUpThrows) {
  const auto m = model_for(MaterialType::Elastic);
  auto pr = self_problem(m, 30);
  auto start = m.params;
  start[Param::E] *= 1e6;
  EXPECT_THROW(optimize(pr, start), SimulationBlowUp);
}

TEST(CompareLosses, OnlyFlowIsImplemented) {
  const auto m = model_for(MaterialType::Elastic);
  auto pr = self_problem(m, 20);
  EXPECT_THROW(compare_losses(pr, m.params, "sds"), NotImplementedError);
  EXPECT_THROW(compare_losses(pr, m.params, "render"), NotImplementedError);
  EXPECT_THROW(compare_losses(pr, m.params, "chamfer"), NotImplementedError);
  EXPECT_EQ(compare_losses(pr, m.params, "flow").status, "converged");
}

TEST(GradientCheck, ElasticAgreesWithFiniteDifferences) {
  const auto m = model_for(MaterialType::Elastic);
  auto pr = self_problem(m, 50);
  auto q = m.params;
  q[Param::E] *= 1.1;
  q[Param::Nu] += 0.02;
  const auto rows = gradient_check(pr, q);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_TRUE(r.mask_stable) << param_name(r.param);
    EXPECT_LT(r.relative_error, 1e-3) << param_name(r.param) << " tangent " << r.tangent << " fd "
                                      << r.finite_difference;
    EXPECT_NE(r.tangent, 0.0);
  }
  EXPECT_THROW(gradient_check(pr, q, 0.0), ValidationError);
}

TEST(RelativeDifference, Basics) {
  EXPECT_EQ(relative_difference(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_difference(1.0, 2.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_difference(-1.0, 1.0), 2.0);
}

TEST(ParameterErrors, AbsoluteAndRelative) {
  MaterialParams<double> est, truth;
  est.set(Param::E, 1.1e5);
  truth.set(Param::E, 1e5);
  est.set(Param::Nu, 0.28);
  truth.set(Param::Nu, 0.3);
  const auto errs = parameter_errors(est, truth, mask_of({Param::E, Param::Nu}));
  ASSERT_EQ(errs.size(), 2u);
  EXPECT_EQ(errs[0].param, Param::E);
  EXPECT_NEAR(errs[0].absolute, 1e4, 1e-9);
  EXPECT_NEAR(errs[0].relative, 0.1, 1e-12);
  EXPECT_NEAR(errs[1].absolute, 0.02, 1e-12);
}

TEST(Report, JsonRoundTrip) {
  IdentificationReport r;
  r.material = "playdoh";
  r.kind = MaterialType::Plasticine;
  r.optimized = mask_of({Param::E, Param::TauY});
  r.initial = model_for(MaterialType::Plasticine).params;
  r.final_params = r.initial;
  r.final_params[Param::E] = 123456.789;
  r.loss_trace = {3.0, 1.0, 2.0, 0.1 + 0.2};
  r.best_loss = 0.1 + 0.2;
  r.iterations = 3;
  r.blowups = 1;
  r.status = "budget";
  r.message = "note";
  r.errors = parameter_errors(r.final_params, r.initial, r.optimized);

  const auto j = report_to_json(r);
  EXPECT_FALSE(j.contains("wall_seconds"));
  const auto back = report_from_json(json::parse(j.dump()));
  EXPECT_EQ(back.material, r.material);
  EXPECT_EQ(back.kind, r.kind);
  EXPECT_EQ(back.optimized, r.optimized);
  EXPECT_EQ(back.loss_trace, r.loss_trace);
  EXPECT_EQ(back.best_trace, (std::vector<double>{3.0, 1.0, 1.0, 0.1 + 0.2}));
  EXPECT_EQ(back.best_loss, r.best_loss);
  EXPECT_EQ(back.iterations, 3);
  EXPECT_EQ(back.blowups, 1);
  EXPECT_EQ(back.status, "budget");
  EXPECT_EQ(back.message, "note");
  EXPECT_EQ(back.final_params[Param::E], 123456.789);
  EXPECT_EQ(back.initial[Param::TauY], 2e3);
  ASSERT_EQ(back.errors.size(), 2u);
  EXPECT_EQ(back.errors[0].relative, r.errors[0].relative);
  EXPECT_EQ(report_to_json(back).dump(), j.dump());

  EXPECT_TRUE(report_to_json(r, true).contains("wall_seconds"));
}

TEST(Report, MalformedInput) {
  EXPECT_THROW(report_from_json(json::parse(R"({"material":"a"})")), FormatError);
  auto j = json::parse(report_to_json(IdentificationReport{.material = "a", .status = "budget"}).dump());
  j["type"] = "Jelly";
  EXPECT_THROW(report_from_json(j), ValidationError);
  j["type"] = "Elastic";
  j["optimized"] = {"E", "bogus"};
  EXPECT_THROW(report_from_json(j), ValidationError);
}

#include <gtest/gtest.h>

#include <cmath>

#include "loadshed/palm.hpp"
#include "support/fixtures.hpp"

using namespace loadshed;
using lstest::Rng;

namespace {

SolverConfig config(std::size_t k, std::size_t iters) {
  SolverConfig cfg;
  cfg.k = k;
  cfg.max_iters = iters;
  return cfg;
}

}  // namespace

TEST(SolverConfig, Validation) {
  const auto net = lstest::two_bus();
  SolverConfig cfg;
  EXPECT_NO_THROW(cfg.validate(net));
  cfg.r2 = 1.0;
  EXPECT_THROW(cfg.validate(net), Error);
  cfg = {};
  cfg.rho = 0.0;
  EXPECT_THROW(cfg.validate(net), Error);
  cfg = {};
  cfg.max_iters = 0;
  EXPECT_THROW(cfg.validate(net), Error);
  cfg = {};
  cfg.k = 2;
  EXPECT_THROW(cfg.validate(net), Error);
  cfg = {};
  cfg.initial = DecisionState{{1.0}, {0.0}, {0.0, 0.0}};
  EXPECT_THROW(cfg.validate(net), DimensionError);
  EXPECT_EQ(parse_init_policy("flow"), InitPolicy::kFlow);
  EXPECT_THROW(parse_init_policy("warm"), Error);
}

TEST(Linearization, FlatStartOnTwoBus) {
  const auto net = lstest::two_bus(1.0, -0.5);
  const DecisionState s = DecisionState::initial(net);
  const double rho = 1e5;
  const StepCoefficients co{1.0, 1.1 * rho, 3.0};
  const auto pts = linearization_points(net, s, rho, co, s.gamma, s.z);
  EXPECT_EQ(pts.u, s.gamma);  // grad_gamma vanishes at theta = 0
  const Vector& p = net.injection();
  EXPECT_NEAR(pts.v[0], -(-1.0 + rho * p[0]) / co.b, 1e-15);
  EXPECT_NEAR(pts.v[1], -(rho * p[1]) / co.b, 1e-15);
  EXPECT_THROW(linearization_points(net, s, rho, {0.0, 1.0, 1.0}, s.gamma, s.z), Error);
}

// The z and theta linearizations must see gamma^{k+1} (and z^{k+1}), not x^k.
TEST(Linearization, GaussSeidelOrderDiffersFromJacobi) {
  Rng rng(61);
  const auto cn = lstest::bundled("ieee14");
  const DecisionState x = lstest::random_feasible_state(rng, cn.net, 0);
  SolverConfig cfg = config(3, 1);
  PalmWorkspace ws;
  const StepResult step = palm_step(cn.net, x, cfg, ws);
  ASSERT_NE(step.state.gamma, x.gamma);

  const auto pts = linearization_points(cn.net, x, cfg.rho, step.coeffs, step.state.gamma, step.state.z);
  EXPECT_EQ(project_gamma(pts.u, cfg.k), step.state.gamma);
  EXPECT_EQ(project_z(pts.v, cn.net.z_lower(), cn.net.z_upper()), step.state.z);

  const Vector jacobi_v = linearize_z(cn.net, x, cfg.rho, step.coeffs.b);
  const Vector jacobi_z = project_z(jacobi_v, cn.net.z_lower(), cn.net.z_upper());
  EXPECT_GT(distance(jacobi_z, step.state.z), 1e-6);
  const Vector jacobi_w = linearize_theta(cn.net, x, cfg.rho, step.coeffs.c);
  EXPECT_GT(distance(jacobi_w, pts.w), 1e-6);
}

TEST(PalmStep, FixedPointStaysPut) {
  const auto net = lstest::two_bus(2.0, -0.5);
  DecisionState s{{0.0}, {0.5, -0.5}, {0.0, 0.0}};
  const StepResult step = palm_step(net, s, config(1, 1));
  EXPECT_EQ(step.state, s);
  EXPECT_EQ(step.record.gam_res, 0.0);
  EXPECT_EQ(step.record.z_res, 0.0);
  EXPECT_EQ(step.record.theta_res, 0.0);
  EXPECT_EQ(critical_point_residual(net, s, 1e5), 0.0);
}

TEST(PalmStep, TwoBusRemovesTheLineAndShedsEverything) {
  const auto net = lstest::two_bus(2.0, -0.5);
  const SolverConfig cfg = config(1, 1);
  DecisionState x = DecisionState::initial(net);
  x.theta = {0.0, 0.2};
  PalmWorkspace ws;
  x = palm_step(net, x, cfg, ws).state;
  EXPECT_EQ(x.gamma, Vector{0.0});
  for (int i = 0; i < 60; ++i) x = palm_step(net, x, cfg, ws).state;
  EXPECT_NEAR(x.z[0], 0.5, 1e-12);
  EXPECT_NEAR(x.z[1], -0.5, 1e-12);
  EXPECT_LE(critical_point_residual(net, x, cfg.rho), 1e-8);
}

TEST(PalmStep, EveryIterateFeasible) {
  const auto cn = lstest::bundled("ieee14");
  const SolverConfig cfg = config(5, 1);
  DecisionState x = DecisionState::initial(cn.net);
  PalmWorkspace ws;
  for (std::size_t it = 0; it < 300; ++it) {
    x = palm_step(cn.net, x, cfg, ws, it).state;
    const auto rep = is_feasible(cn.net, x, cfg.k, 1e-12);
    ASSERT_TRUE(rep.feasible) << "iteration " << it << ": " << rep.violations[0].constraint;
    for (double g : x.gamma) ASSERT_TRUE(g == 0.0 || g == 1.0);
  }
}

TEST(Solve, Ieee14MonotoneFromFirstFeasibleIterate) {
  const auto cn = lstest::bundled("ieee14");
  const SolveReport rep = solve(cn.net, config(5, 10));
  ASSERT_EQ(rep.trace.size(), 10u);
  for (std::size_t i = 1; i < rep.trace.size(); ++i)
    EXPECT_LE(rep.trace[i].obj, rep.trace[i - 1].obj + 1e-9 * (1.0 + std::abs(rep.trace[i - 1].obj)));
}

TEST(Solve, ReportIsConsistent) {
  const auto cn = lstest::bundled("ieee14");
  SolverConfig cfg = config(3, 200);
  cfg.trace_every = 50;
  const SolveReport rep = solve(cn.net, cfg);
  EXPECT_EQ(rep.removed_lines.size(), 3u);
  EXPECT_TRUE(std::is_sorted(rep.removed_lines.begin(), rep.removed_lines.end()));
  for (std::size_t l : rep.removed_lines) EXPECT_EQ(rep.final_state.gamma[l], 0.0);
  EXPECT_EQ(rep.shed.mw, load_shed_mw(cn.net, rep.final_state).mw);
  EXPECT_TRUE(rep.feasibility.feasible);
  EXPECT_EQ(rep.iterations, 200u);
  EXPECT_DOUBLE_EQ(rep.objective, eval_H(cn.net, rep.final_state, cfg.rho));
  ASSERT_EQ(rep.trace.size(), 5u);  // iterations 0, 50, 100, 150 and the last one, 199
  EXPECT_EQ(rep.trace.back().iter, 199u);
  EXPECT_EQ(rep.trace[1].iter, 50u);
  EXPECT_TRUE(std::isfinite(rep.squared_step_sum));
}

TEST(Solve, TraceEveryKeepsLastIteration) {
  const auto cn = lstest::bundled("ieee14");
  SolverConfig cfg = config(1, 101);
  cfg.trace_every = 50;
  const SolveReport rep = solve(cn.net, cfg);
  ASSERT_EQ(rep.trace.size(), 3u);
  EXPECT_EQ(rep.trace.back().iter, 100u);
}

TEST(Solve, StopsOnTolerances) {
  const auto net = lstest::two_bus(2.0, -0.5);
  SolverConfig cfg = config(1, 10000);
  cfg.primal_tol = 1e-9;
  cfg.dual_tol = 1e-9;
  const SolveReport rep = solve(net, cfg);
  EXPECT_TRUE(rep.stopped_on_tolerance);
  EXPECT_LT(rep.iterations, 10000u);
  EXPECT_LE(rep.trace.back().prim_res, 1e-9);
  EXPECT_LE(rep.trace.back().max_dual(), 1e-9);
}

TEST(Solve, StepNormsVanish) {
  const auto cn = lstest::bundled("ieee14");
  const SolveReport rep = solve(cn.net, config(2, 1000));
  EXPECT_LT(rep.squared_step_sum, 1e3);
  EXPECT_LT(rep.trace.back().max_dual(), 1e-4);
  EXPECT_LT(rep.trace.back().max_dual(), rep.trace.front().max_dual());
}

TEST(Solve, Deterministic) {
  const auto cn = lstest::bundled("ieee14");
  const SolveReport a = solve(cn.net, config(4, 150));
  const SolveReport b = solve(cn.net, config(4, 150));
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.final_state, b.final_state);
}

TEST(Solve, KZeroFromFlowStartShedsAlmostNothing) {
  const auto cn = lstest::bundled("ieee14");
  SolverConfig cfg = config(0, 1000);
  cfg.init = InitPolicy::kFlow;
  const SolveReport rep = solve(cn.net, cfg);
  EXPECT_TRUE(rep.removed_lines.empty());
  EXPECT_LT(rep.shed.mw, 0.5);
}

TEST(Solve, FrozenGammaKeepsOutageSet) {
  const auto cn = lstest::bundled("synth4bus");
  SolverConfig cfg = config(0, 300);
  cfg.freeze_gamma = true;
  cfg.initial = DecisionState::initial(cn.net);
  cfg.initial->gamma = {1, 0, 1, 0, 1};
  const SolveReport rep = solve(cn.net, cfg);
  EXPECT_EQ(rep.final_state.gamma, (Vector{1, 0, 1, 0, 1}));
  EXPECT_EQ(rep.removed_lines, (std::vector<std::size_t>{1, 3}));
  EXPECT_TRUE(rep.feasibility.feasible);
}

TEST(CriticalPointResidual, PositiveAwayFromStationarity) {
  Rng rng(62);
  const auto cn = lstest::bundled("ieee14");
  for (int t = 0; t < 10; ++t) {
    const DecisionState s = lstest::random_feasible_state(rng, cn.net, 2);
    EXPECT_GT(critical_point_residual(cn.net, s, 1e5), 0.0);
  }
}

TEST(FlowInit, SolvesTheLosslessFlowEquations) {
  for (const char* name : {"ieee14", "ieee118", "toy2bus", "synth4bus"}) {
    const auto cn = lstest::bundled(name);
    const FlowSolution sol = solve_lossless_flow(cn.net);
    DecisionState s = DecisionState::initial(cn.net);
    s.theta = sol.theta;
    EXPECT_LE(norm2(flow_residual(cn.net, s)), 1e-10) << name;
    EXPECT_EQ(sol.theta[0], 0.0);
  }
}

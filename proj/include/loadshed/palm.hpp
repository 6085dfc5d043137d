#pragma once

// Proximal alternating linearized minimization for the penalized
// worst-case load-shedding problem. One iteration updates the blocks in
// Gauss-Seidel order:
//
//   a = r1 L1(theta^k)            gamma+ = P_gamma(gamma^k - grad_gamma H(gamma^k, z^k, theta^k) / a)
//   b = r2 rho                    z+     = P_z    (z^k     - grad_z     H(gamma+,  z^k, theta^k) / b)
//   c = r3 L3(gamma+, z+)         theta+ = P_theta(theta^k - grad_theta H(gamma+,  z+,  theta^k) / c)
//
// Each step decreases H by at least (r_i - 1) L_i / 2 ||block step||^2, so
// the objective is monotone along the trajectory; solve() enforces that.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "loadshed/caseio.hpp"
#include "loadshed/error.hpp"
#include "loadshed/flowinit.hpp"
#include "loadshed/linalg.hpp"
#include "loadshed/netmodel.hpp"
#include "loadshed/objective.hpp"
#include "loadshed/projections.hpp"

namespace loadshed {

// Starting point when SolverConfig::initial is empty. kFlat is gamma = 1,
// z = 0, theta = 0; kFlow keeps gamma = 1, z = 0 and takes theta from the
// lossless flow solution of the intact network.
enum class InitPolicy { kFlat, kFlow };

inline std::string to_string(InitPolicy p) { return p == InitPolicy::kFlat ? "flat" : "flow"; }

inline InitPolicy parse_init_policy(std::string_view s) {
  if (s == "flat") return InitPolicy::kFlat;
  if (s == "flow") return InitPolicy::kFlow;
  throw Error("unknown init policy '" + std::string(s) + "' (expected flat or flow)");
}

struct SolverConfig {
  std::size_t k = 1;  // lines to take out of service
  double rho = 1e5;
  double r1 = 1.1;
  double r2 = 1.1;
  double r3 = 1.1;
  std::size_t max_iters = 1000;
  double primal_tol = 0.0;  // 0 disables the test
  double dual_tol = 0.0;    // 0 disables the test
  double inner_tol = 1e-10;
  std::size_t inner_max_iters = 50000;
  std::optional<DecisionState> initial;  // overrides init when set
  InitPolicy init = InitPolicy::kFlat;
  bool freeze_gamma = false;             // keep gamma at its initial value
  RebalancePolicy rebalance = RebalancePolicy::kProportional;  // recorded in reports
  std::size_t trace_every = 1;
  double descent_slack = 1e-9;  // relative slack of the monotonicity check

  void validate(const PowerNetwork& net) const {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw Error("rho must be positive");
    if (!(r1 > 1.0) || !(r2 > 1.0) || !(r3 > 1.0)) throw Error("r1, r2, r3 must exceed 1");
    if (max_iters < 1) throw Error("max_iters must be at least 1");
    if (primal_tol < 0.0 || dual_tol < 0.0) throw Error("tolerances must be nonnegative");
    if (!(inner_tol > 0.0)) throw Error("inner_tol must be positive");
    if (trace_every < 1) throw Error("trace_every must be at least 1");
    if (!freeze_gamma && k > net.num_lines())
      throw Error("K = " + std::to_string(k) + " exceeds the number of lines (" +
                  std::to_string(net.num_lines()) + ")");
    if (initial) check_dimensions(net, *initial);
  }
};

// Floor applied to L1 and L3 so the step coefficients stay positive (L1
// vanishes at theta = 0).
inline double lipschitz_floor(double rho) { return 1e-8 * rho; }

struct IterationRecord {
  std::size_t iter = 0;
  double obj = 0.0;        // H at x^{k+1}
  double theta_res = 0.0;  // ||theta^{k+1} - theta^k||
  double z_res = 0.0;      // ||z^{k+1} - z^k||
  double gam_res = 0.0;    // ||gamma^{k+1} - gamma^k||
  double prim_res = 0.0;   // ||c(gamma^{k+1}, z^{k+1}, theta^{k+1})||

  double max_dual() const { return std::max({theta_res, z_res, gam_res}); }
  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct StepCoefficients {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
};

struct LinearizationPoints {
  Vector u;
  Vector v;
  Vector w;
};

inline Vector linearize_gamma(const PowerNetwork& net, const DecisionState& at, double rho, double a) {
  Vector u = grad_gamma(net, at, rho);
  for (std::size_t l = 0; l < u.size(); ++l) u[l] = at.gamma[l] - u[l] / a;
  return u;
}

inline Vector linearize_z(const PowerNetwork& net, const DecisionState& at, double rho, double b) {
  Vector v = grad_z(net, at, rho);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = at.z[i] - v[i] / b;
  return v;
}

inline Vector linearize_theta(const PowerNetwork& net, const DecisionState& at, double rho, double c) {
  Vector w = grad_theta(net, at, rho);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = at.theta[i] - w[i] / c;
  return w;
}

// Gauss-Seidel linearization points: u at (gamma^k, z^k, theta^k), v at
// (gamma^{k+1}, z^k, theta^k) and w at (gamma^{k+1}, z^{k+1}, theta^k).
inline LinearizationPoints linearization_points(const PowerNetwork& net, const DecisionState& state,
                                                double rho, const StepCoefficients& coeffs,
                                                const Vector& gamma_next, const Vector& z_next) {
  check_dimensions(net, state);
  require_size(gamma_next, net.num_lines(), "gamma_next");
  require_size(z_next, net.num_buses(), "z_next");
  if (!(coeffs.a > 0.0) || !(coeffs.b > 0.0) || !(coeffs.c > 0.0))
    throw Error("linearization coefficients must be positive");
  LinearizationPoints out;
  out.u = linearize_gamma(net, state, rho, coeffs.a);
  DecisionState staged = state;
  staged.gamma = gamma_next;
  out.v = linearize_z(net, staged, rho, coeffs.b);
  staged.z = z_next;
  out.w = linearize_theta(net, staged, rho, coeffs.c);
  return out;
}

struct PalmWorkspace {
  LipschitzWorkspace lipschitz;
  ThetaWorkspace theta;
};

struct StepResult {
  DecisionState state;
  IterationRecord record;
  StepCoefficients coeffs;
  ThetaProjection theta_projection;  // diagnostics of the theta subproblem
};

inline StepResult palm_step(const PowerNetwork& net, const DecisionState& x, const SolverConfig& cfg,
                            PalmWorkspace& ws, std::size_t iter = 0) {
  check_dimensions(net, x);
  const double rho = cfg.rho;
  const double floor = lipschitz_floor(rho);
  StepResult out;
  out.state = x;
  DecisionState& nx = out.state;

  // gamma
  if (!cfg.freeze_gamma) {
    out.coeffs.a = cfg.r1 * std::max(lipschitz_gamma(net, x.theta, rho, &ws.lipschitz), floor);
    const Vector u = linearize_gamma(net, x, rho, out.coeffs.a);
    nx.gamma = project_gamma(u, cfg.k);
  }

  // z, linearized at (gamma^{k+1}, z^k, theta^k)
  out.coeffs.b = cfg.r2 * rho;
  const Vector v = linearize_z(net, nx, rho, out.coeffs.b);
  nx.z = project_z(v, net.z_lower(), net.z_upper());

  // theta, linearized at (gamma^{k+1}, z^{k+1}, theta^k)
  out.coeffs.c = cfg.r3 * std::max(lipschitz_theta(net, nx.gamma, nx.z, rho, &ws.lipschitz), floor);
  const Vector w = linearize_theta(net, nx, rho, out.coeffs.c);
  ThetaProjectionOptions topts;
  topts.tol = cfg.inner_tol;
  topts.max_iters = cfg.inner_max_iters;
  out.theta_projection = project_theta(w, net, topts, &ws.theta);
  nx.theta = out.theta_projection.theta;

  const Vector c = flow_residual(net, nx);
  double shed = 0.0;
  for (std::size_t i : net.load_buses()) shed += nx.z[i];
  out.record.iter = iter;
  out.record.obj = -shed + 0.5 * rho * dot(c, c);
  out.record.prim_res = norm2(c);
  out.record.theta_res = distance(nx.theta, x.theta);
  out.record.z_res = distance(nx.z, x.z);
  out.record.gam_res = distance(nx.gamma, x.gamma);
  return out;
}

inline StepResult palm_step(const PowerNetwork& net, const DecisionState& x, const SolverConfig& cfg) {
  PalmWorkspace ws;
  return palm_step(net, x, cfg, ws);
}

// True when gamma is binary with exactly K zeros.
inline bool cardinality_feasible(const DecisionState& s, std::size_t k) {
  std::size_t zeros = 0;
  for (double g : s.gamma) {
    if (g == 0.0) ++zeros;
    else if (g != 1.0) return false;
  }
  return zeros == k;
}

// Largest prox fixed-point gap over the blocks, using the block Lipschitz
// constants themselves (r_i = 1) as step coefficients. Zero exactly at
// critical points of the penalized problem.
inline double critical_point_residual(const PowerNetwork& net, const DecisionState& s, double rho,
                                      bool include_gamma = true, double inner_tol = 1e-10) {
  check_dimensions(net, s);
  const double floor = lipschitz_floor(rho);
  double res = 0.0;
  if (include_gamma) {
    const double a = std::max(lipschitz_gamma(net, s.theta, rho), floor);
    const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(net.num_lines()) - sum(s.gamma)));
    res = std::max(res, distance(s.gamma, project_gamma(linearize_gamma(net, s, rho, a), k)));
  }
  res = std::max(res, distance(s.z, project_z(linearize_z(net, s, rho, rho), net.z_lower(), net.z_upper())));
  const double c = std::max(lipschitz_theta(net, s.gamma, s.z, rho), floor);
  ThetaProjectionOptions topts;
  topts.tol = inner_tol;
  res = std::max(res, distance(s.theta, project_theta(linearize_theta(net, s, rho, c), net, topts).theta));
  return res;
}

struct SolveReport {
  std::vector<std::size_t> removed_lines;  // 0-based line positions with gamma = 0, ascending
  LoadShed shed;
  DecisionState final_state;
  std::vector<IterationRecord> trace;
  FeasibilityReport feasibility;
  SolverConfig config;
  std::size_t iterations = 0;
  bool stopped_on_tolerance = false;
  double objective = 0.0;
  double squared_step_sum = 0.0;        // sum_k ||x^{k+1} - x^k||^2
  std::size_t inner_nonconverged = 0;   // theta projections that hit their cap
};

inline DecisionState initial_state(const PowerNetwork& net, const SolverConfig& cfg) {
  if (cfg.initial) return *cfg.initial;
  DecisionState x = DecisionState::initial(net);
  if (cfg.init == InitPolicy::kFlow) x.theta = solve_lossless_flow(net).theta;
  return x;
}

inline SolveReport solve(const PowerNetwork& net, const SolverConfig& cfg) {
  cfg.validate(net);
  DecisionState x = initial_state(net, cfg);
  const std::size_t k_removed =
      cfg.freeze_gamma ? static_cast<std::size_t>(std::llround(static_cast<double>(net.num_lines()) - sum(x.gamma)))
                       : cfg.k;

  SolveReport rep;
  rep.config = cfg;
  PalmWorkspace ws;
  double obj = eval_H(net, x, cfg.rho);

  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    const bool feasible_before = cardinality_feasible(x, k_removed);
    StepResult step = palm_step(net, x, cfg, ws, it);
    const IterationRecord& rec = step.record;
    if (!step.theta_projection.converged) ++rep.inner_nonconverged;

    // Descent only holds between iterates that already satisfy the
    // cardinality constraint (the default start gamma = 1 does not).
    if (feasible_before && rec.obj > obj + cfg.descent_slack * (1.0 + std::abs(obj)))
      throw DescentError("objective increased at iteration " + std::to_string(it) + ": " +
                             std::to_string(obj) + " -> " + std::to_string(rec.obj),
                         it, obj, rec.obj);

    rep.squared_step_sum += rec.theta_res * rec.theta_res + rec.z_res * rec.z_res + rec.gam_res * rec.gam_res;
    obj = rec.obj;
    x = std::move(step.state);
    rep.iterations = it + 1;

    const bool last = it + 1 == cfg.max_iters;
    const bool early = (cfg.primal_tol > 0.0 || cfg.dual_tol > 0.0) &&
                       (cfg.primal_tol == 0.0 || rec.prim_res <= cfg.primal_tol) &&
                       (cfg.dual_tol == 0.0 || rec.max_dual() <= cfg.dual_tol);
    if (it % cfg.trace_every == 0 || last || early) rep.trace.push_back(rec);
    if (early) {
      rep.stopped_on_tolerance = true;
      break;
    }
  }

  for (std::size_t l = 0; l < x.gamma.size(); ++l)
    if (x.gamma[l] == 0.0) rep.removed_lines.push_back(l);
  rep.shed = load_shed_mw(net, x);
  rep.feasibility = is_feasible(net, x, k_removed, 1e-9);
  rep.objective = obj;
  rep.final_state = std::move(x);
  return rep;
}

}  // namespace loadshed

#pragma once

// Penalized load-shedding objective
//
//   H(gamma, z, theta) = -1'z_d + rho/2 ||c(gamma, z, theta)||^2
//
// with its three block gradients and block Lipschitz constants. All matrix
// products are evaluated through the sparse incidence structure; with
// s = sin(E' theta) and c the flow residual,
//
//   grad_gamma = rho diag(s) D E' c
//   grad_z     = -e_d - rho c
//   grad_theta = rho E diag(cos(E' theta)) diag(gamma) D E' c

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#include "loadshed/error.hpp"
#include "loadshed/linalg.hpp"
#include "loadshed/netmodel.hpp"

namespace loadshed {

struct PenaltyParams {
  double rho = 1e5;

  explicit PenaltyParams(double r) : rho(r) {
    if (!(r > 0.0) || !std::isfinite(r)) throw Error("penalty rho must be positive");
  }
};

inline double eval_H(const PowerNetwork& net, const DecisionState& s, double rho) {
  const Vector c = flow_residual(net, s);
  double shed = 0.0;
  for (std::size_t i : net.load_buses()) shed += s.z[i];
  return -shed + 0.5 * rho * dot(c, c);
}

namespace detail {

// E' c for the current state.
inline Vector projected_residual(const PowerNetwork& net, const DecisionState& s) {
  const Vector c = flow_residual(net, s);
  Vector etc(net.num_lines());
  net.incidence_transpose_times(c, etc);
  return etc;
}

}  // namespace detail

inline Vector grad_gamma(const PowerNetwork& net, const DecisionState& s, double rho) {
  const Vector etc = detail::projected_residual(net, s);
  const Vector diff = net.angle_differences(s.theta);
  const auto& d = net.admittance();
  Vector g(net.num_lines());
  for (std::size_t l = 0; l < g.size(); ++l) g[l] = rho * d[l] * std::sin(diff[l]) * etc[l];
  return g;
}

inline Vector grad_z(const PowerNetwork& net, const DecisionState& s, double rho) {
  Vector g = flow_residual(net, s);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = -rho * g[i] - (net.is_load_bus(i) ? 1.0 : 0.0);
  return g;
}

inline Vector grad_theta(const PowerNetwork& net, const DecisionState& s, double rho) {
  Vector etc = detail::projected_residual(net, s);
  const Vector diff = net.angle_differences(s.theta);
  const auto& d = net.admittance();
  for (std::size_t l = 0; l < etc.size(); ++l)
    etc[l] *= rho * std::cos(diff[l]) * s.gamma[l] * d[l];
  Vector g(net.num_buses());
  net.incidence_times(etc, g);
  return g;
}

struct LipschitzEstimates {
  double L1 = 0.0;  // gamma block, depends on theta
  double L2 = 0.0;  // z block, constant rho
  double L3 = 0.0;  // theta block, depends on (gamma, z)
  double s1 = 0.0;  // uniform bounds over all iterates
  double s2 = 0.0;
  double s3 = 0.0;
};

// Warm-start vectors for the power iterations behind L1 and L3. Reusing the
// previous eigenvector makes consecutive PALM iterations cheap.
struct LipschitzWorkspace {
  Vector gamma_vec;
  Vector theta_vec;
};

// L1 = rho || (D E'E D) o (s s') || = rho ||E D diag(s)||^2 with s = sin(E' theta).
inline double lipschitz_gamma(const PowerNetwork& net, std::span<const double> theta, double rho,
                              LipschitzWorkspace* ws = nullptr,
                              const PowerIterationOptions& opts = {}) {
  const Vector diff = net.angle_differences(theta);
  Vector w(net.num_lines());
  for (std::size_t l = 0; l < w.size(); ++l) w[l] = net.admittance()[l] * std::sin(diff[l]);
  auto est = net.weighted_incidence_norm_sq(w, opts, ws ? std::span<const double>(ws->gamma_vec)
                                                        : std::span<const double>{});
  if (!est.converged) throw ConvergenceError("L1 power iteration", est.iterations);
  if (ws) ws->gamma_vec = std::move(est.vector);
  return rho * est.value;
}

// L3 = rho ||E||^2 (2 ||Q|| + ||R||), Q = G D E'E D G, R = G D E'(P + z), G = diag(gamma).
inline double lipschitz_theta(const PowerNetwork& net, std::span<const double> gamma,
                              std::span<const double> z, double rho,
                              LipschitzWorkspace* ws = nullptr,
                              const PowerIterationOptions& opts = {}) {
  require_size(gamma, net.num_lines(), "gamma");
  require_size(z, net.num_buses(), "z");
  Vector w(net.num_lines());
  for (std::size_t l = 0; l < w.size(); ++l) w[l] = gamma[l] * net.admittance()[l];
  auto est = net.weighted_incidence_norm_sq(w, opts, ws ? std::span<const double>(ws->theta_vec)
                                                        : std::span<const double>{});
  if (!est.converged) throw ConvergenceError("L3 power iteration", est.iterations);
  if (ws) ws->theta_vec = std::move(est.vector);
  const double norm_q = est.value;

  Vector pz(net.num_buses());
  for (std::size_t i = 0; i < pz.size(); ++i) pz[i] = net.injection()[i] + z[i];
  Vector r(net.num_lines());
  net.incidence_transpose_times(pz, r);
  for (std::size_t l = 0; l < r.size(); ++l) r[l] *= w[l];

  const double ne = net.norm_incidence();
  return rho * ne * ne * (2.0 * norm_q + norm2(r));
}

// All block constants at one state, plus the state-independent bounds
// s1 = rho m ||ED||^2, s2 = rho, s3 = rho ||E||^2 ||ED||^2 (2 + ||P||).
inline LipschitzEstimates lipschitz(const PowerNetwork& net, const DecisionState& s, double rho,
                                    const PowerIterationOptions& opts = {}) {
  check_dimensions(net, s);
  LipschitzEstimates out;
  out.L1 = lipschitz_gamma(net, s.theta, rho, nullptr, opts);
  out.L2 = rho;
  out.L3 = lipschitz_theta(net, s.gamma, s.z, rho, nullptr, opts);
  const double ne2 = net.norm_incidence() * net.norm_incidence();
  const double ned2 = net.norm_weighted_incidence() * net.norm_weighted_incidence();
  out.s1 = rho * static_cast<double>(net.num_lines()) * ned2;
  out.s2 = rho;
  out.s3 = rho * ne2 * ned2 * (2.0 + norm2(net.injection()));
  return out;
}

}  // namespace loadshed

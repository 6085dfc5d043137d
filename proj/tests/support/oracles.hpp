#pragma once

// Independent reference computations: dense matrices built from the line
// list and formulas written the long way round (Eigen for linear algebra),
// so they share no code paths with the library.

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include "loadshed/netmodel.hpp"
#include "support/fixtures.hpp"

namespace lstest {

inline Eigen::MatrixXd dense_incidence(const loadshed::PowerNetwork& net) {
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(net.num_buses()),
                                            static_cast<Eigen::Index>(net.num_lines()));
  for (std::size_t l = 0; l < net.num_lines(); ++l) {
    e(static_cast<Eigen::Index>(net.lines()[l].from), static_cast<Eigen::Index>(l)) = 1.0;
    e(static_cast<Eigen::Index>(net.lines()[l].to), static_cast<Eigen::Index>(l)) = -1.0;
  }
  return e;
}

inline Eigen::VectorXd to_eigen(const loadshed::Vector& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Eigen::VectorXd dense_residual(const loadshed::PowerNetwork& net, const loadshed::DecisionState& s) {
  const Eigen::MatrixXd e = dense_incidence(net);
  const Eigen::VectorXd d = to_eigen(net.admittance());
  const Eigen::VectorXd g = to_eigen(s.gamma);
  const Eigen::VectorXd sn = (e.transpose() * to_eigen(s.theta)).array().sin().matrix();
  return e * d.asDiagonal() * g.asDiagonal() * sn - (to_eigen(net.injection()) + to_eigen(s.z));
}

// -1'z_d + rho/2 ||c||^2, the load-bus indicator taken from the sign of P.
inline double dense_H(const loadshed::PowerNetwork& net, const loadshed::DecisionState& s, double rho) {
  double shed = 0.0;
  for (std::size_t i = 0; i < net.num_buses(); ++i)
    if (!(net.injection()[i] > 0.0)) shed += s.z[i];
  return -shed + 0.5 * rho * dense_residual(net, s).squaredNorm();
}

inline double exact_spectral_norm(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

using loadshed::distance;
using loadshed::norm2;
using loadshed::norm_inf;
using loadshed::sum;

inline constexpr double kHalfPi = std::numbers::pi / 2.0;

// Exhaustive argmin of ||gamma - u||^2 over binary gamma with K zeros. Ties
// in the objective go to the zero set whose ascending index list is
// lexicographically smallest.
inline Vector brute_gamma(const Vector& u, std::size_t k) {
  const std::size_t m = u.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best_zeros;
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != k) continue;
    double cost = 0.0;
    std::vector<std::size_t> zeros;
    for (std::size_t i = 0; i < m; ++i) {
      const double g = (mask >> i) & 1u ? 0.0 : 1.0;
      if (g == 0.0) zeros.push_back(i);
      cost += (g - u[i]) * (g - u[i]);
    }
    if (cost < best || (cost == best && zeros < best_zeros)) {
      best = cost;
      best_zeros = zeros;
    }
  }
  Vector g(m, 1.0);
  for (std::size_t i : best_zeros) g[i] = 0.0;
  return g;
}

inline Vector clamp_shift(const Vector& v, double lambda, const Vector& lo, const Vector& hi) {
  Vector z(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) z[i] = std::clamp(v[i] - lambda, lo[i], hi[i]);
  return z;
}

// Bisection on the nonincreasing g(lambda) = 1'clamp(v - lambda, lo, hi);
// returns the multiplier of the equality constraint.
inline double bisect_lambda(const Vector& v, const Vector& lo, const Vector& hi) {
  double a = std::numeric_limits<double>::infinity(), b = -a;
  for (std::size_t i = 0; i < v.size(); ++i) {
    a = std::min(a, v[i] - hi[i]);
    b = std::max(b, v[i] - lo[i]);
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a + b);
    (sum(clamp_shift(v, mid, lo, hi)) > 0.0 ? a : b) = mid;
  }
  return 0.5 * (a + b);
}

inline Vector bisect_z(const Vector& v, const Vector& lo, const Vector& hi) {
  return clamp_shift(v, bisect_lambda(v, lo, hi), lo, hi);
}

// KKT residual of z as the projection of v onto {lo <= z <= hi, 1'z = 0},
// with the multiplier taken from the bisection oracle.
inline double z_kkt_residual(const Vector& v, const Vector& z, const Vector& lo, const Vector& hi) {
  double r = std::abs(sum(z));
  for (std::size_t i = 0; i < z.size(); ++i) r = std::max({r, lo[i] - z[i], z[i] - hi[i]});
  const Vector ref = clamp_shift(v, bisect_lambda(v, lo, hi), lo, hi);
  return std::max(r, distance(z, ref));
}

// Generic dense oracle for the theta projection on tiny nets: try every
// assignment of {lower, inactive, upper} to the lines, solve the equality-
// constrained least-squares problem, keep the best feasible candidate.
inline Vector enumerate_theta(const PowerNetwork& net, const Vector& w) {
  const std::size_t m = net.num_lines();
  const Eigen::MatrixXd e = lstest::dense_incidence(net);
  const Eigen::VectorXd we = lstest::to_eigen(w);
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_theta = we;
  std::size_t combos = 1;
  for (std::size_t l = 0; l < m; ++l) combos *= 3;
  for (std::size_t code = 0; code < combos; ++code) {
    std::vector<int> sign(m);
    std::size_t c = code, active = 0;
    for (std::size_t l = 0; l < m; ++l, c /= 3) {
      sign[l] = static_cast<int>(c % 3) - 1;
      active += sign[l] != 0;
    }
    Eigen::VectorXd theta = we;
    if (active) {
      Eigen::MatrixXd ea(e.rows(), static_cast<Eigen::Index>(active));
      Eigen::VectorXd rhs(static_cast<Eigen::Index>(active));
      Eigen::Index k = 0;
      for (std::size_t l = 0; l < m; ++l)
        if (sign[l]) {
          ea.col(k) = e.col(static_cast<Eigen::Index>(l));
          rhs(k++) = sign[l] * kHalfPi;
        }
      // theta = w - E_A mu with E_A'theta = rhs.
      const Eigen::MatrixXd g = ea.transpose() * ea;
      const Eigen::VectorXd mu = g.completeOrthogonalDecomposition().solve(ea.transpose() * we - rhs);
      theta = we - ea * mu;
      if ((ea.transpose() * theta - rhs).norm() > 1e-9) continue;
    }
    if ((e.transpose() * theta).cwiseAbs().maxCoeff() > kHalfPi + 1e-9) continue;
    const double cost = (theta - we).squaredNorm();
    if (cost < best) {
      best = cost;
      best_theta = theta;
    }
  }
  return Vector(best_theta.data(), best_theta.data() + best_theta.size());
}

// w with some angle differences well outside the limits.
inline Vector infeasible_w(Rng& rng, const PowerNetwork& net) {
  Vector w = lstest::uniform_vector(rng, net.num_buses(), -3.0, 3.0);
  if (norm_inf(net.angle_differences(w)) <= kHalfPi) w[net.lines()[0].from] += 4.0;
  return w;
}

enum class Block { kGamma, kZ, kTheta };

inline Vector& block(DecisionState& s, Block b) { return b == Block::kGamma ? s.gamma : b == Block::kZ ? s.z : s.theta; }

// Central differences of the dense reference H.
inline Vector fd_gradient(const PowerNetwork& net, DecisionState s, double rho, Block b, double h = 1e-6) {
  Vector& x = block(s, b);
  Vector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = lstest::dense_H(net, s, rho);
    x[i] = keep - h;
    const double down = lstest::dense_H(net, s, rho);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double rel_error(const Vector& a, const Vector& ref) {
  return distance(a, ref) / std::max(norm2(ref), 1.0);
}

}  // namespace lstest

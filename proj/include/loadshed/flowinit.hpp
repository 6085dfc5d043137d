#pragma once

// Phase angles that satisfy the lossless flow equations E D sin(E' theta) = P
// with every line in service. Used as an optional PALM starting point: from
// there the flow residual is zero and only the effect of the removed lines has
// to be absorbed by load shedding.

#include <cmath>
#include <cstddef>
#include <vector>

#include "loadshed/error.hpp"
#include "loadshed/linalg.hpp"
#include "loadshed/netmodel.hpp"

namespace loadshed {

struct FlowSolution {
  Vector theta;
  std::size_t iterations = 0;
  double residual = 0.0;  // ||E D sin(E' theta) - P||
};

namespace detail {

// Dense LU with partial pivoting; throws on a singular matrix.
inline Vector lu_solve(DenseMatrix a, Vector b) {
  const std::size_t n = a.rows;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(p, k))) p = i;
    if (a(p, k) == 0.0) throw NetworkError("singular flow Jacobian (is the network connected?)");
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(p, j), a(k, j));
      std::swap(b[p], b[k]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
      b[i] -= f * b[k];
    }
  }
  Vector x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
    x[i] = s / a(i, i);
  }
  return x;
}

}  // namespace detail

// Newton's method on the reduced system (bus 0 is the angle reference),
// started from theta = 0. Throws NetworkError when the iteration fails to
// converge or the solution violates the angle limits.
inline FlowSolution solve_lossless_flow(const PowerNetwork& net, double tol = 1e-12,
                                        std::size_t max_iters = 50) {
  const std::size_t n = net.num_buses();
  FlowSolution sol;
  sol.theta.assign(n, 0.0);
  if (n < 2) return sol;
  const auto& lines = net.lines();
  const auto& d = net.admittance();
  DecisionState s = DecisionState::initial(net);

  for (std::size_t it = 0; it <= max_iters; ++it) {
    s.theta = sol.theta;
    const Vector c = flow_residual(net, s);
    sol.residual = norm2(c);
    sol.iterations = it;
    if (sol.residual <= tol) break;
    if (it == max_iters) throw NetworkError("lossless flow: Newton iteration did not converge");

    // Jacobian E D diag(cos(E' theta)) E' without the reference row/column.
    const Vector diff = net.angle_differences(sol.theta);
    DenseMatrix jac(n - 1, n - 1);
    for (std::size_t l = 0; l < lines.size(); ++l) {
      const double g = d[l] * std::cos(diff[l]);
      const std::size_t i = lines[l].from, j = lines[l].to;
      if (i > 0) jac(i - 1, i - 1) += g;
      if (j > 0) jac(j - 1, j - 1) += g;
      if (i > 0 && j > 0) {
        jac(i - 1, j - 1) -= g;
        jac(j - 1, i - 1) -= g;
      }
    }
    Vector rhs(n - 1);
    for (std::size_t i = 1; i < n; ++i) rhs[i - 1] = -c[i];
    const Vector step = detail::lu_solve(std::move(jac), std::move(rhs));
    for (std::size_t i = 1; i < n; ++i) sol.theta[i] += step[i - 1];
  }
  if (norm_inf(net.angle_differences(sol.theta)) > kAngleLimit)
    throw NetworkError("lossless flow solution violates the angle limits");
  return sol;
}

}  // namespace loadshed

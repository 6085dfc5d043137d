#pragma once

// The three PALM proximal subproblems. Each is a Euclidean projection:
//
//   gamma : onto {0,1}^m with exactly K zeros          (closed form)
//   z     : onto {L <= z <= U, 1'z = 0}                (breakpoint search)
//   theta : onto {-pi/2 <= E' theta <= pi/2}           (dual FISTA + active-set polish)

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "loadshed/error.hpp"
#include "loadshed/linalg.hpp"
#include "loadshed/netmodel.hpp"

namespace loadshed {

// argmin ||gamma - u||^2 over binary gamma with exactly K zeros: the K
// smallest entries of u are switched off. Among equal values the lower line
// index is switched off first.
inline Vector project_gamma(std::span<const double> u, std::size_t k) {
  const std::size_t m = u.size();
  if (k > m) throw Error("project_gamma: K = " + std::to_string(k) + " exceeds m = " + std::to_string(m));
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return u[a] < u[b]; });
  Vector gamma(m, 1.0);
  for (std::size_t i = 0; i < k; ++i) gamma[order[i]] = 0.0;
  return gamma;
}

// argmin ||z - v||^2 subject to lower <= z <= upper and 1'z = 0.
//
// The KKT conditions give z = clamp(v - lambda, lower, upper) for a scalar
// lambda; g(lambda) = 1'clamp(v - lambda, lower, upper) is piecewise linear
// and nonincreasing, so sorting its 2n breakpoints locates the root exactly.
inline Vector project_z(std::span<const double> v, std::span<const double> lower,
                        std::span<const double> upper) {
  const std::size_t n = v.size();
  require_size(lower, n, "project_z lower bound");
  require_size(upper, n, "project_z upper bound");
  for (std::size_t i = 0; i < n; ++i)
    if (lower[i] > upper[i]) throw InfeasibleError("project_z: lower bound exceeds upper bound");
  if (sum(upper) < 0.0 || sum(lower) > 0.0)
    throw InfeasibleError("project_z: box does not intersect 1'z = 0");

  Vector z(n);
  std::vector<std::size_t> free;
  double target = 0.0;  // required sum over the free coordinates
  for (std::size_t i = 0; i < n; ++i) {
    if (lower[i] == upper[i]) {
      z[i] = lower[i];
      target -= lower[i];
    } else {
      free.push_back(i);
    }
  }
  if (free.empty()) return z;

  struct Breakpoint {
    double lambda;
    int delta;  // +1: coordinate leaves its upper bound, -1: reaches its lower bound
  };
  std::vector<Breakpoint> bps;
  bps.reserve(2 * free.size());
  double g = 0.0;  // g(lambda) for lambda at or below the first breakpoint
  for (std::size_t i : free) {
    bps.push_back({v[i] - upper[i], +1});
    bps.push_back({v[i] - lower[i], -1});
    g += upper[i];
  }
  std::sort(bps.begin(), bps.end(), [](const Breakpoint& a, const Breakpoint& b) {
    return a.lambda < b.lambda || (a.lambda == b.lambda && a.delta > b.delta);
  });

  double lambda = bps.front().lambda;
  if (g > target) {
    long slope = 0;  // number of coordinates strictly inside their box
    bool found = false;
    for (std::size_t k = 0; k + 1 < bps.size(); ++k) {
      slope += bps[k].delta;
      const double width = bps[k + 1].lambda - bps[k].lambda;
      const double g_next = g - static_cast<double>(slope) * width;
      if (g_next <= target) {
        lambda = slope > 0 ? bps[k].lambda + (g - target) / static_cast<double>(slope) : bps[k].lambda;
        found = true;
        break;
      }
      g = g_next;
    }
    if (!found) lambda = bps.back().lambda;
  }

  // Recompute lambda from the identified active set to avoid the rounding
  // accumulated along the sweep.
  double fixed_sum = 0.0, free_sum = 0.0;
  std::size_t n_inside = 0;
  for (std::size_t i : free) {
    const double t = v[i] - lambda;
    if (t >= upper[i]) {
      fixed_sum += upper[i];
    } else if (t <= lower[i]) {
      fixed_sum += lower[i];
    } else {
      free_sum += v[i];
      ++n_inside;
    }
  }
  if (n_inside > 0) lambda = (free_sum + fixed_sum - target) / static_cast<double>(n_inside);
  for (std::size_t i : free) z[i] = std::clamp(v[i] - lambda, lower[i], upper[i]);
  return z;
}

struct ThetaProjectionOptions {
  double tol = 1e-10;
  std::size_t max_iters = 50000;
  std::size_t polish_every = 20;
};

struct ThetaProjection {
  Vector theta;
  Vector mu_upper;  // multipliers of E' theta <= pi/2
  Vector mu_lower;  // multipliers of -E' theta <= pi/2
  std::size_t iterations = 0;
  double kkt = 0.0;
  bool converged = false;
};

// Dual multipliers carried between PALM iterations.
struct ThetaWorkspace {
  Vector mu_upper;
  Vector mu_lower;
};

// max of the stationarity norm ||theta - w + E(mu+ - mu-)||, the angle-limit
// violation, multiplier negativity and the complementarity products.
inline double theta_kkt_residual(const PowerNetwork& net, std::span<const double> w,
                                 std::span<const double> theta, std::span<const double> mu_upper,
                                 std::span<const double> mu_lower) {
  const std::size_t m = net.num_lines(), n = net.num_buses();
  require_size(w, n, "w");
  require_size(theta, n, "theta");
  require_size(mu_upper, m, "mu_upper");
  require_size(mu_lower, m, "mu_lower");
  Vector y(m), ey(n), d(m);
  for (std::size_t l = 0; l < m; ++l) y[l] = mu_upper[l] - mu_lower[l];
  net.incidence_times(y, ey);
  double stat = 0.0;
  for (std::size_t i = 0; i < n; ++i) stat += std::pow(theta[i] - w[i] + ey[i], 2);
  double r = std::sqrt(stat);
  net.incidence_transpose_times(theta, d);
  for (std::size_t l = 0; l < m; ++l) {
    r = std::max(r, std::abs(d[l]) - kAngleLimit);
    r = std::max(r, std::max(-mu_upper[l], -mu_lower[l]));
    r = std::max(r, mu_upper[l] * std::abs(kAngleLimit - d[l]));
    r = std::max(r, mu_lower[l] * std::abs(kAngleLimit + d[l]));
  }
  return std::max(r, 0.0);
}

namespace detail {

// Solves the symmetric system G x = b by Gaussian elimination with full
// pivoting; directions with pivots below rel_tol * max|G| are set to zero.
inline Vector solve_semidefinite(DenseMatrix g, Vector b, double rel_tol = 1e-12) {
  const std::size_t k = g.rows;
  std::vector<std::size_t> col_perm(k);
  std::iota(col_perm.begin(), col_perm.end(), std::size_t{0});
  double scale = 0.0;
  for (double x : g.data) scale = std::max(scale, std::abs(x));
  std::size_t rank = 0;
  for (; rank < k; ++rank) {
    std::size_t pr = rank, pc = rank;
    double best = 0.0;
    for (std::size_t i = rank; i < k; ++i)
      for (std::size_t j = rank; j < k; ++j)
        if (std::abs(g(i, j)) > best) best = std::abs(g(i, j)), pr = i, pc = j;
    if (best <= rel_tol * scale) break;
    if (pr != rank) {
      for (std::size_t j = 0; j < k; ++j) std::swap(g(pr, j), g(rank, j));
      std::swap(b[pr], b[rank]);
    }
    if (pc != rank) {
      for (std::size_t i = 0; i < k; ++i) std::swap(g(i, pc), g(i, rank));
      std::swap(col_perm[pc], col_perm[rank]);
    }
    for (std::size_t i = rank + 1; i < k; ++i) {
      const double f = g(i, rank) / g(rank, rank);
      if (f == 0.0) continue;
      for (std::size_t j = rank; j < k; ++j) g(i, j) -= f * g(rank, j);
      b[i] -= f * b[rank];
    }
  }
  Vector xp(k, 0.0);
  for (std::size_t ii = rank; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t j = ii + 1; j < rank; ++j) s -= g(ii, j) * xp[j];
    xp[ii] = s / g(ii, ii);
  }
  Vector x(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) x[col_perm[j]] = xp[j];
  return x;
}

// Treats the lines flagged in `sign` (+1 upper, -1 lower, 0 inactive) as
// equalities and solves the resulting equality-constrained projection.
inline void active_set_solve(const PowerNetwork& net, std::span<const double> w,
                             const std::vector<int>& sign, ThetaProjection& out) {
  const std::size_t m = net.num_lines(), n = net.num_buses();
  std::vector<std::size_t> act;
  for (std::size_t l = 0; l < m; ++l)
    if (sign[l] != 0) act.push_back(l);
  const auto& lines = net.lines();
  const std::size_t k = act.size();
  DenseMatrix g(k, k);
  Vector rhs(k);
  for (std::size_t a = 0; a < k; ++a) {
    const Line& la = lines[act[a]];
    rhs[a] = w[la.from] - w[la.to] - sign[act[a]] * kAngleLimit;
    for (std::size_t b = 0; b < k; ++b) {
      const Line& lb = lines[act[b]];
      double v = 0.0;
      if (la.from == lb.from) v += 1.0;
      if (la.from == lb.to) v -= 1.0;
      if (la.to == lb.from) v -= 1.0;
      if (la.to == lb.to) v += 1.0;
      g(a, b) = v;
    }
  }
  const Vector y = solve_semidefinite(std::move(g), std::move(rhs));
  Vector yl(m, 0.0);
  out.mu_upper.assign(m, 0.0);
  out.mu_lower.assign(m, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    yl[act[a]] = y[a];
    if (sign[act[a]] > 0) out.mu_upper[act[a]] = y[a];
    else out.mu_lower[act[a]] = -y[a];
  }
  Vector ey(n);
  net.incidence_times(yl, ey);
  out.theta.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) out.theta[i] = w[i] - ey[i];
}

// Pulls theta radially toward the origin (which is feasible) until every
// angle difference is within the limit.
inline void clip_to_limits(const PowerNetwork& net, Vector& theta) {
  const double worst = norm_inf(net.angle_differences(theta));
  if (worst <= kAngleLimit) return;
  double t = kAngleLimit / worst;
  for (int guard = 0; guard < 8; ++guard) {
    Vector scaled(theta);
    for (auto& x : scaled) x *= t;
    if (norm_inf(net.angle_differences(scaled)) <= kAngleLimit) {
      theta = std::move(scaled);
      return;
    }
    t = std::nextafter(t, 0.0);
  }
  for (auto& x : theta) x *= t;
}

}  // namespace detail

// argmin ||theta - w||^2 subject to |E' theta| <= pi/2 elementwise.
//
// Solved on the dual: with multipliers mu+, mu- >= 0 of the upper and lower
// limits, theta = w - E(mu+ - mu-), and the dual is a smooth quadratic over
// the nonnegative orthant, minimised by accelerated projected gradient with
// adaptive restart. Every `polish_every` iterations the current active set is
// solved as an equality-constrained problem; an exact KKT point ends the
// search early. If the iteration cap is hit the best iterate is returned with
// converged = false. The returned theta always satisfies the limits.
inline ThetaProjection project_theta(std::span<const double> w, const PowerNetwork& net,
                                     const ThetaProjectionOptions& opts = {},
                                     ThetaWorkspace* ws = nullptr) {
  const std::size_t m = net.num_lines(), n = net.num_buses();
  require_size(w, n, "w");
  if (!(opts.tol > 0.0)) throw Error("project_theta: tolerance must be positive");

  ThetaProjection out;
  const Vector dw = net.angle_differences(w);
  if (norm_inf(dw) <= kAngleLimit) {
    out.theta.assign(w.begin(), w.end());
    out.mu_upper.assign(m, 0.0);
    out.mu_lower.assign(m, 0.0);
    out.converged = true;
    if (ws) ws->mu_upper.assign(m, 0.0), ws->mu_lower.assign(m, 0.0);
    return out;
  }

  const double ne = net.norm_incidence();
  const double step = 1.0 / (2.0 * ne * ne);

  Vector mup(m, 0.0), mum(m, 0.0);
  if (ws && ws->mu_upper.size() == m && ws->mu_lower.size() == m) {
    mup = ws->mu_upper;
    mum = ws->mu_lower;
  }
  Vector xp = mup, xm = mum;            // extrapolated point
  Vector prevp = mup, prevm = mum;
  Vector y(m), ey(n), theta(n), d(m);
  double t = 1.0;

  auto primal = [&](const Vector& p, const Vector& q, Vector& th) {
    for (std::size_t l = 0; l < m; ++l) y[l] = p[l] - q[l];
    net.incidence_times(y, ey);
    for (std::size_t i = 0; i < n; ++i) th[i] = w[i] - ey[i];
  };

  ThetaProjection best;
  best.kkt = std::numeric_limits<double>::infinity();
  auto consider = [&](ThetaProjection cand) {
    cand.kkt = theta_kkt_residual(net, w, cand.theta, cand.mu_upper, cand.mu_lower);
    if (cand.kkt < best.kkt) best = std::move(cand);
  };

  std::size_t it = 0;
  for (it = 1; it <= opts.max_iters; ++it) {
    primal(xp, xm, theta);
    net.incidence_transpose_times(theta, d);
    for (std::size_t l = 0; l < m; ++l) {
      mup[l] = std::max(0.0, xp[l] - step * (kAngleLimit - d[l]));
      mum[l] = std::max(0.0, xm[l] - step * (kAngleLimit + d[l]));
    }
    // Restart momentum when the step opposes the gradient at the extrapolated point.
    double align = 0.0;
    for (std::size_t l = 0; l < m; ++l)
      align += (kAngleLimit - d[l]) * (mup[l] - prevp[l]) + (kAngleLimit + d[l]) * (mum[l] - prevm[l]);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = align > 0.0 ? 0.0 : (t - 1.0) / t_next;
    t = align > 0.0 ? 1.0 : t_next;
    for (std::size_t l = 0; l < m; ++l) {
      xp[l] = mup[l] + beta * (mup[l] - prevp[l]);
      xm[l] = mum[l] + beta * (mum[l] - prevm[l]);
    }
    prevp = mup;
    prevm = mum;

    const bool polish = it % opts.polish_every == 0 || it == 1;
    if (polish || it == opts.max_iters) {
      ThetaProjection cur;
      cur.theta.resize(n);
      primal(mup, mum, cur.theta);
      cur.mu_upper = mup;
      cur.mu_lower = mum;
      consider(std::move(cur));
      if (best.kkt <= opts.tol) break;

      // Active set: positive multipliers or violated limits of the current iterate.
      Vector dc(m);
      net.incidence_transpose_times(best.theta, dc);
      std::vector<int> sign(m, 0);
      for (std::size_t l = 0; l < m; ++l) {
        if (mup[l] > 0.0 || dc[l] > kAngleLimit) sign[l] = 1;
        else if (mum[l] > 0.0 || dc[l] < -kAngleLimit) sign[l] = -1;
      }
      ThetaProjection pol;
      detail::active_set_solve(net, w, sign, pol);
      consider(std::move(pol));
      if (best.kkt <= opts.tol) break;
    }
  }

  best.iterations = std::min(it, opts.max_iters);
  best.converged = best.kkt <= opts.tol;
  if (ws) {
    ws->mu_upper = best.mu_upper;
    ws->mu_lower = best.mu_lower;
  }
  detail::clip_to_limits(net, best.theta);
  return best;
}

}  // namespace loadshed

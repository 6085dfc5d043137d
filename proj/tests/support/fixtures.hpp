#pragma once

// Shared test fixtures: hand-built nets, seeded random networks and states,
// and access to the bundled cases.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "loadshed/caseio.hpp"
#include "loadshed/netmodel.hpp"
#include "loadshed/projections.hpp"

#ifndef LOADSHED_DATA_DIR
#define LOADSHED_DATA_DIR "data"
#endif

namespace lstest {

using loadshed::DecisionState;
using loadshed::Line;
using loadshed::PowerNetwork;
using loadshed::Vector;
using Rng = std::mt19937_64;

inline std::string data_path(const std::string& file) { return std::string(LOADSHED_DATA_DIR) + "/" + file; }

inline loadshed::CaseNetwork bundled(const std::string& name,
                                     loadshed::RebalancePolicy p = loadshed::RebalancePolicy::kProportional) {
  return loadshed::build_network(loadshed::load_case_file(data_path(name + ".json")), p);
}

// One line from bus 0 to bus 1.
inline PowerNetwork two_bus(double d = 1.0, double p0 = -0.5) {
  return PowerNetwork::create(2, {{0, 1}}, {d}, {p0, -p0}, 100.0);
}

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline Vector uniform_vector(Rng& rng, std::size_t n, double lo, double hi) {
  Vector v(n);
  for (auto& x : v) x = uniform(rng, lo, hi);
  return v;
}

// Connected network: a random spanning tree plus extra random lines
// (parallel lines allowed), admittances in [1, 20], balanced injections with
// at least one generator and one load.
inline PowerNetwork random_network(Rng& rng, std::size_t n, std::size_t m) {
  std::vector<Line> lines;
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    lines.push_back(rng() % 2 ? Line{i, j} : Line{j, i});
  }
  while (lines.size() < m) {
    const std::size_t i = rng() % n, j = rng() % n;
    if (i != j) lines.push_back({i, j});
  }
  Vector d = uniform_vector(rng, lines.size(), 1.0, 20.0);

  Vector p = uniform_vector(rng, n, -1.0, 1.0);
  p[0] = std::abs(p[0]) + 0.1;
  p[n - 1] = -std::abs(p[n - 1]) - 0.1;
  double pos = 0.0, neg = 0.0;
  for (double x : p) (x > 0 ? pos : neg) += x;
  for (auto& x : p)
    if (x > 0) x *= -neg / pos;
  const double residue = loadshed::sum(p);
  p[0] -= residue;
  return PowerNetwork::create(n, std::move(lines), std::move(d), std::move(p), 100.0);
}

// Uniform random angles scaled so every |E'theta| stays within `fraction` of pi/2.
inline Vector random_angles(Rng& rng, const PowerNetwork& net, double fraction = 0.9) {
  Vector theta = uniform_vector(rng, net.num_buses(), -1.0, 1.0);
  const double worst = loadshed::norm_inf(net.angle_differences(theta));
  if (worst > 0.0) {
    const double s = fraction * uniform(rng, 0.1, 1.0) * (std::numbers::pi / 2.0) / worst;
    for (auto& t : theta) t *= s;
  }
  return theta;
}

// Feasible z: a random point projected onto the box with 1'z = 0.
inline Vector random_z(Rng& rng, const PowerNetwork& net) {
  Vector v(net.num_buses());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = uniform(rng, net.z_lower()[i], net.z_upper()[i]);
  return loadshed::project_z(v, net.z_lower(), net.z_upper());
}

// Binary gamma with exactly k zeros at random positions.
inline Vector random_gamma(Rng& rng, std::size_t m, std::size_t k) {
  Vector g(m, 1.0);
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < m; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t i = 0; i < k; ++i) g[idx[i]] = 0.0;
  return g;
}

// Feasible state with gamma relaxed to [0, 1] (for derivative checks).
inline DecisionState random_relaxed_state(Rng& rng, const PowerNetwork& net) {
  return {uniform_vector(rng, net.num_lines(), 0.0, 1.0), random_z(rng, net), random_angles(rng, net)};
}

inline DecisionState random_feasible_state(Rng& rng, const PowerNetwork& net, std::size_t k) {
  return {random_gamma(rng, net.num_lines(), k), random_z(rng, net), random_angles(rng, net)};
}

}  // namespace lstest

#pragma once

// Lossless AC network in incidence form:
//
//   E D diag(gamma) sin(E' theta) = P + z
//
// E is the n x m bus/line incidence matrix (column l: +1 at the from-bus,
// -1 at the to-bus), D the diagonal of line susceptances and P the balanced
// real-power injections in per-unit.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "loadshed/error.hpp"
#include "loadshed/linalg.hpp"

namespace loadshed {

inline constexpr double kAngleLimit = std::numbers::pi / 2.0;

// Endpoints of a line as 0-based bus positions.
struct Line {
  std::size_t from = 0;
  std::size_t to = 0;
};

class PowerNetwork {
 public:
  // Validates every invariant and caches ||E|| and ||E D||. Buses with
  // P_i > 0 are generators, everything else (including P_i == 0) is load.
  static PowerNetwork create(std::size_t num_buses, std::vector<Line> lines, Vector admittance,
                             Vector injection, double base_mva, double balance_tol = 1e-9) {
    PowerNetwork net;
    net.n_ = num_buses;
    net.lines_ = std::move(lines);
    net.admittance_ = std::move(admittance);
    net.injection_ = std::move(injection);
    net.base_mva_ = base_mva;
    net.validate(balance_tol);
    net.classify();
    net.cache_norms();
    return net;
  }

  std::size_t num_buses() const noexcept { return n_; }
  std::size_t num_lines() const noexcept { return lines_.size(); }
  const std::vector<Line>& lines() const noexcept { return lines_; }
  const Vector& admittance() const noexcept { return admittance_; }
  const Vector& injection() const noexcept { return injection_; }
  double base_mva() const noexcept { return base_mva_; }

  bool is_load_bus(std::size_t i) const { return is_load_[i]; }
  const std::vector<std::size_t>& load_buses() const noexcept { return load_buses_; }
  const std::vector<std::size_t>& gen_buses() const noexcept { return gen_buses_; }

  // Box for z: L = -[0; P_g], U = -[P_d; 0].
  const Vector& z_lower() const noexcept { return z_lower_; }
  const Vector& z_upper() const noexcept { return z_upper_; }

  // -1'P_d in per-unit.
  double total_load() const noexcept { return total_load_; }

  double norm_incidence() const noexcept { return norm_e_; }            // ||E||
  double norm_weighted_incidence() const noexcept { return norm_ed_; }  // ||E D||

  // y = E x, x of length m.
  void incidence_times(std::span<const double> x, std::span<double> y) const {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t l = 0; l < lines_.size(); ++l) {
      y[lines_[l].from] += x[l];
      y[lines_[l].to] -= x[l];
    }
  }

  // x = E' y, y of length n.
  void incidence_transpose_times(std::span<const double> y, std::span<double> x) const {
    for (std::size_t l = 0; l < lines_.size(); ++l) x[l] = y[lines_[l].from] - y[lines_[l].to];
  }

  Vector angle_differences(std::span<const double> theta) const {
    require_size(theta, n_, "theta");
    Vector d(lines_.size());
    incidence_transpose_times(theta, d);
    return d;
  }

  // lambda_max(E W^2 E') = ||E diag(w)||^2 for per-line weights w.
  EigenEstimate weighted_incidence_norm_sq(std::span<const double> w,
                                           const PowerIterationOptions& opts = {},
                                           std::span<const double> warm_start = {}) const {
    require_size(w, lines_.size(), "line weights");
    auto apply = [&](std::span<const double> x, std::span<double> y) {
      std::fill(y.begin(), y.end(), 0.0);
      for (std::size_t l = 0; l < lines_.size(); ++l) {
        const double t = w[l] * w[l] * (x[lines_[l].from] - x[lines_[l].to]);
        y[lines_[l].from] += t;
        y[lines_[l].to] -= t;
      }
    };
    return largest_eigenvalue(n_, apply, opts, warm_start);
  }

 private:
  PowerNetwork() = default;

  void validate(double balance_tol) const {
    if (admittance_.size() != lines_.size())
      throw DimensionError("admittance", lines_.size(), admittance_.size());
    if (injection_.size() != n_) throw DimensionError("injection", n_, injection_.size());
    if (!(base_mva_ > 0.0)) throw NetworkError("base MVA must be positive");
    for (std::size_t l = 0; l < lines_.size(); ++l) {
      const auto& ln = lines_[l];
      if (ln.from >= n_ || ln.to >= n_)
        throw NetworkError("line " + std::to_string(l + 1) + " references a bus out of range");
      if (ln.from == ln.to)
        throw NetworkError("line " + std::to_string(l + 1) + " is a self-loop");
      if (!(admittance_[l] > 0.0) || !std::isfinite(admittance_[l]))
        throw NetworkError("line " + std::to_string(l + 1) + " has non-positive admittance");
    }
    for (double p : injection_)
      if (!std::isfinite(p)) throw NetworkError("non-finite injection");
    const double imbalance = sum(injection_);
    if (std::abs(imbalance) > balance_tol)
      throw NetworkError("injections are not balanced: 1'P = " + std::to_string(imbalance));
  }

  void classify() {
    is_load_.assign(n_, true);
    z_lower_.assign(n_, 0.0);
    z_upper_.assign(n_, 0.0);
    total_load_ = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      if (injection_[i] > 0.0) {
        is_load_[i] = false;
        gen_buses_.push_back(i);
        z_lower_[i] = -injection_[i];
      } else {
        load_buses_.push_back(i);
        z_upper_[i] = -injection_[i];
        total_load_ -= injection_[i];
      }
    }
  }

  void cache_norms() {
    const Vector ones(lines_.size(), 1.0);
    const auto e = weighted_incidence_norm_sq(ones);
    const auto ed = weighted_incidence_norm_sq(admittance_);
    if (!e.converged) throw ConvergenceError("||E|| power iteration", e.iterations);
    if (!ed.converged) throw ConvergenceError("||ED|| power iteration", ed.iterations);
    norm_e_ = std::sqrt(e.value);
    norm_ed_ = std::sqrt(ed.value);
  }

  std::size_t n_ = 0;
  std::vector<Line> lines_;
  Vector admittance_;
  Vector injection_;
  double base_mva_ = 100.0;

  std::vector<bool> is_load_;
  std::vector<std::size_t> load_buses_;
  std::vector<std::size_t> gen_buses_;
  Vector z_lower_;
  Vector z_upper_;
  double total_load_ = 0.0;
  double norm_e_ = 0.0;
  double norm_ed_ = 0.0;
};

// PALM iterate: line statuses, injection adjustments and phase angles.
struct DecisionState {
  Vector gamma;  // 1 = in service
  Vector z;      // load shed (>= 0) on load buses, generation cut (<= 0) on generators
  Vector theta;  // radians

  // gamma = 1, z = 0, theta = 0.
  static DecisionState initial(const PowerNetwork& net) {
    return {Vector(net.num_lines(), 1.0), Vector(net.num_buses(), 0.0),
            Vector(net.num_buses(), 0.0)};
  }

  friend bool operator==(const DecisionState&, const DecisionState&) = default;
};

inline void check_dimensions(const PowerNetwork& net, const DecisionState& s) {
  require_size(s.gamma, net.num_lines(), "gamma");
  require_size(s.z, net.num_buses(), "z");
  require_size(s.theta, net.num_buses(), "theta");
}

// D diag(gamma) sin(E' theta).
inline Vector line_flow(const PowerNetwork& net, const DecisionState& s) {
  check_dimensions(net, s);
  Vector flow = net.angle_differences(s.theta);
  const auto& d = net.admittance();
  for (std::size_t l = 0; l < flow.size(); ++l)
    flow[l] = s.gamma[l] == 0.0 ? 0.0 : d[l] * s.gamma[l] * std::sin(flow[l]);
  return flow;
}

// c(gamma, z, theta) = E D diag(gamma) sin(E' theta) - (P + z).
inline Vector flow_residual(const PowerNetwork& net, const DecisionState& s) {
  const Vector flow = line_flow(net, s);
  Vector c(net.num_buses());
  net.incidence_times(flow, c);
  const auto& p = net.injection();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= p[i] + s.z[i];
  return c;
}

struct Violation {
  std::string constraint;
  double magnitude = 0.0;
};

struct FeasibilityReport {
  bool feasible = true;
  std::vector<Violation> violations;

  void add(std::string constraint, double magnitude) {
    feasible = false;
    violations.push_back({std::move(constraint), magnitude});
  }
};

// Checks gamma binary with m - 1'gamma = K, 1'z = 0, the z box and the angle
// limits |E' theta| <= pi/2, each to within tol. Never throws.
inline FeasibilityReport is_feasible(const PowerNetwork& net, const DecisionState& s,
                                     std::size_t k, double tol) {
  FeasibilityReport rep;
  const std::size_t n = net.num_buses(), m = net.num_lines();
  if (s.gamma.size() != m || s.z.size() != n || s.theta.size() != n) {
    rep.add("dimension", std::abs(static_cast<double>(s.gamma.size()) - static_cast<double>(m)) +
                             std::abs(static_cast<double>(s.z.size()) - static_cast<double>(n)) +
                             std::abs(static_cast<double>(s.theta.size()) - static_cast<double>(n)));
    return rep;
  }

  double binary = 0.0;
  for (double g : s.gamma) binary = std::max(binary, std::min(std::abs(g), std::abs(g - 1.0)));
  if (binary > tol) rep.add("binary", binary);

  const double card = std::abs(static_cast<double>(m) - sum(s.gamma) - static_cast<double>(k));
  if (card > tol) rep.add("cardinality", card);

  const double balance = std::abs(sum(s.z));
  if (balance > tol) rep.add("balance", balance);

  double box = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    box = std::max(box, net.z_lower()[i] - s.z[i]);
    box = std::max(box, s.z[i] - net.z_upper()[i]);
  }
  if (box > tol) rep.add("z_bounds", box);

  const double angle = norm_inf(net.angle_differences(s.theta)) - kAngleLimit;
  if (angle > tol) rep.add("angle_limit", angle);
  return rep;
}

struct LoadShed {
  double mw = 0.0;
  std::optional<double> percent;  // empty when the network carries no load
};

// base_mva * 1'z_d and its share of the total load.
inline LoadShed load_shed_mw(const PowerNetwork& net, const DecisionState& s) {
  require_size(s.z, net.num_buses(), "z");
  double shed = 0.0;
  for (std::size_t i : net.load_buses()) shed += s.z[i];
  LoadShed out;
  out.mw = net.base_mva() * shed;
  if (net.total_load() > 0.0) out.percent = 100.0 * shed / net.total_load();
  return out;
}

}  // namespace loadshed

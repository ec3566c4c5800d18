#pragma once

#include "wchj/coupling.hpp"
#include "wchj/paths.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace wchj {

// Bounded stopping rules adapted to the path filtration: the value on omega
// depends only on omega restricted to [0, tau(omega)]. Hitting and jump rules
// accept an optional floor (tau := max(raw, floor)); the max with a constant
// keeps adaptedness and guarantees essinf tau > 0 when cycles are needed.
class StoppingRule {
 public:
  enum class Kind { deterministic, hitting, nth_jump, simple, dyadic, curve_hitting };

  static StoppingRule deterministic(double t0);
  static StoppingRule hitting(std::vector<int> modes, double cap, double floor = 0);
  static StoppingRule nth_jump(int n, double cap, double floor = 0);
  // Stop at the first observation time with omega(times[j]) in stop_sets[j];
  // the last stop set is forced to all modes, so the rule is bounded by
  // times.back(). Events are finite cylinder conditions.
  static StoppingRule simple(std::vector<double> times, std::vector<std::vector<bool>> stop_sets);
  // Grid-observed hitting: simple rule with the same stop set at every level.
  static StoppingRule grid_hitting(std::vector<int> modes, int num_modes, double dt_obs,
                                   int levels);
  // tau_n = (floor(tau 2^n) + 1) / 2^n: half-open dyadic cells, grid points
  // land in the next cell so tau_n > tau always.
  static StoppingRule dyadic(int level, StoppingRule base);
  // First cell time at which the curve driven by `policy` from `anchor` is
  // within `radius` of `target` while the mode lies in `modes`.
  static StoppingRule curve_hitting(ControlPolicy policy, Vector anchor, Vector target,
                                    double radius, std::vector<int> modes, double cap,
                                    double dt_curve, double floor = 0);

  double evaluate(const IndexPath& omega) const;
  double cap() const;
  Kind kind() const;
  bool is_simple() const;              // takes finitely many values
  std::vector<double> values() const;  // the value list for simple kinds

  struct Impl;

 private:
  explicit StoppingRule(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

inline StoppingRule dyadic_approximation(const StoppingRule& rule, int level) {
  return StoppingRule::dyadic(level, rule);
}

// E_j = {tau = t_j} (disjoint), F_j = {tau >= t_j} (nested decreasing).
struct SimpleDecomposition {
  std::vector<double> times;
  std::vector<std::function<bool(const IndexPath&)>> event;  // E_j membership

  bool in_event(int j, const IndexPath& omega) const { return event[j](omega); }
  bool in_tail(int j, const IndexPath& omega) const;  // F_j membership
};

SimpleDecomposition decompose_simple(const StoppingRule& rule);

// Row i is the empirical law of omega(tau) over paths started in mode i; rows
// sum to exactly one.
Matrix estimate_stopped_matrix(const CouplingMatrix& lambda, const StoppingRule& rule,
                               long samples_per_row, std::uint64_t seed, int threads = 1);

}  // namespace wchj

#pragma once

#include "wchj/coupling.hpp"
#include "wchj/grid.hpp"
#include "wchj/hamiltonian.hpp"
#include "wchj/paths.hpp"
#include "wchj/stopping.hpp"

#include <cstdint>
#include <vector>

namespace wchj {

// Monte Carlo estimate of E_a [ int_0^tau L_{omega(s)}(x + I(Xi)(s), -Xi(s)) + alpha ds ].
// Paths are stratified by the initial mode with weights a_i, so the estimate
// is exactly linear in a and exactly affine in alpha (slope mean_tau).
struct ActionEstimate {
  double mean = 0;
  double std_error = 0;
  long samples = 0;
  double alpha = 0;
  double mean_tau = 0;

  struct ModeSlice {
    int mode = 0;
    double weight = 0;  // a_i
    double mean = 0;    // conditional on omega(0) = mode
    double std_error = 0;
    double mean_tau = 0;
    long samples = 0;
  };
  std::vector<ModeSlice> breakdown;
};

ActionEstimate action_mc(const LagrangianTable& table, const CouplingMatrix& lambda,
                         const Vector& x, const ControlPolicy& policy, const StoppingRule& rule,
                         const Vector& a, double alpha, long samples, std::uint64_t seed,
                         double dt_curve, int threads = 1);

// Rule with events given by finite cylinder conditions: stop at the first
// observation time whose mode lies in the stop set (see StoppingRule::simple).
struct SimpleRuleSpec {
  std::vector<double> times;
  std::vector<std::vector<bool>> stop_sets;

  StoppingRule rule() const { return StoppingRule::simple(times, stop_sets); }
};

// Control constant on each level interval [t_{j-1}, t_j) and constant on each
// conditioning cylinder: the velocity row is picked by the mode observed at
// the level start.
struct StagedControlSpec {
  std::vector<double> times;
  std::vector<Matrix> velocity;  // per level: (mode, axis)

  ControlPolicy policy() const { return ControlPolicy::staged(times, velocity); }
};

struct ExactAction {
  double value = 0;            // lagrangian_part + alpha * expected_tau
  double lagrangian_part = 0;
  double expected_tau = 0;
  double alpha = 0;
};

// Exact evaluation by expanding the expectation over mode histories at the
// observation times: cylinder probabilities times semigroup-weighted time
// integrals (adaptive quadrature to 1e-9 per segment).
ExactAction action_exact_simple(const LagrangianTable& table, const CouplingMatrix& lambda,
                                const Vector& x, const StagedControlSpec& control,
                                const SimpleRuleSpec& rule, const Vector& a, double alpha);

// margin = action - E_a[u_{omega(0)}(x) - u_{omega(tau)}(y)], estimated with
// common random numbers on both sides. Subsolutions keep this nonnegative up
// to discretization. Refuses (domain_error) unless the policy passes the
// cycle check for displacement y - x.
struct MarginEstimate {
  double margin = 0;
  double std_error = 0;
  double action_mean = 0;
  double lhs_mean = 0;
  long samples = 0;
  double cycle_violation = 0;
};

MarginEstimate subsolution_estimate_margin(const VectorField& u, const LagrangianTable& table,
                                           const CouplingMatrix& lambda, const Vector& x,
                                           const Vector& y, const ControlPolicy& policy,
                                           const StoppingRule& rule, const Vector& a, double alpha,
                                           long samples, std::uint64_t seed, double dt_curve,
                                           double cycle_tol, int threads = 1);

// Proportional allocation of sample counts to the strata of a; exact total,
// at least one sample per active stratum.
std::vector<long> stratify_counts(const Vector& a, long samples);

}  // namespace wchj

#include "wchj/action.hpp"

#include "test_helpers.hpp"
#include "wchj/solver.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace wchj;

namespace {

constexpr double kPi = std::numbers::pi;

CouplingMatrix sym2() {
  Matrix m(2, 2);
  m << 1, -1, -1, 1;
  return CouplingMatrix{m};
}

Vector e_of(int i, int m) {
  Vector e = Vector::Zero(m);
  e[i] = 1.0;
  return e;
}

Potential cosine1d(double phase = 0.0) {
  Eigen::VectorXi f(1);
  f << 1;
  return Potential::cosine(1, 1.0, f, phase);
}

struct ScalarSetup {
  TorusGrid grid{1, 64};
  CouplingMatrix lam{Matrix::Zero(1, 1)};
  HamiltonianSpec spec;
  LagrangianTable table;
  ScalarSetup()
      : spec(grid, {QuadraticMode{cosine1d()}}),
        table(legendre_transform(spec, grid, 3.0, 121)) {}
};

struct TwoModeSetup {
  TorusGrid grid{1, 64};
  CouplingMatrix lam{sym2()};
  HamiltonianSpec spec;
  LagrangianTable table;
  TwoModeSetup()
      : spec(grid, {QuadraticMode{cosine1d()}, QuadraticMode{cosine1d(-0.6 * kPi)}}),
        table(legendre_transform(spec, grid, 3.0, 121)) {}
};

}  // namespace

TEST_SUITE_BEGIN("action");

TEST_CASE("zero stopping time gives exactly zero") {
  ScalarSetup s;
  ActionEstimate est =
      action_mc(s.table, s.lam, Vector::Constant(1, 0.3), ControlPolicy::constant(Vector::Zero(1)),
                StoppingRule::deterministic(0.0), Vector::Ones(1), 2.5, 500, 42, 0.01);
  CHECK(est.mean == 0.0);
  CHECK(est.mean_tau == 0.0);
}

TEST_CASE("single mode action matches the classical line integral") {
  // deterministic path: int_0^t (q^2/2 - cos(2 pi (x + s q)) + alpha) ds
  ScalarSetup s;
  double x0 = 0.2, q = 0.6, t = 1.1, alpha = 0.7;
  double dt_curve = 0.001;
  ActionEstimate est = action_mc(s.table, s.lam, Vector::Constant(1, x0),
                                 ControlPolicy::constant(Vector::Constant(1, q)),
                                 StoppingRule::deterministic(t), Vector::Ones(1), alpha, 50, 42,
                                 dt_curve);
  // interpolation on the 64-point grid costs O(h^2) per evaluation; the
  // quadrature itself is first order in dt_curve
  double oracle = testutil::simpson_oracle(
      [&](double u) {
        return 0.5 * q * q - std::cos(2.0 * kPi * (x0 + u * q)) + alpha;
      },
      0.0, t);
  double sup_dl = 2.0 * kPi * std::abs(q);  // |d/ds cos(2 pi (x + s q))|
  double h = s.grid.h();
  double budget = 2.0 * dt_curve * sup_dl + 2.0 * kPi * kPi * h * h * t;
  CHECK(std::abs(est.mean - oracle) <= budget);
  CHECK(est.std_error < 1e-12);  // single mode: nothing is random
}

TEST_CASE("two-mode action matches the semigroup-weighted quadrature") {
  TwoModeSetup s;
  double x0 = 0.15, q = 0.5, t = 0.9, alpha = 0.4;
  ActionEstimate est = action_mc(s.table, s.lam, Vector::Constant(1, x0),
                                 ControlPolicy::constant(Vector::Constant(1, q)),
                                 StoppingRule::deterministic(t), e_of(0, 2), alpha, 40000, 7,
                                 5e-4);
  auto integrand = [&](double u) {
    Matrix e = semigroup(s.lam, u);
    double acc = 0;
    for (int j = 0; j < 2; ++j) {
      double phase = j == 0 ? 0.0 : -0.6 * kPi;
      acc += e(0, j) * (0.5 * q * q - std::cos(2.0 * kPi * (x0 + u * q) + phase));
    }
    return acc;
  };
  double oracle = testutil::simpson_oracle(integrand, 0.0, t) + alpha * t;
  CHECK(std::abs(est.mean - oracle) <= 3.0 * est.std_error + 2e-3);
}

TEST_CASE("exact cylinder expansion agrees with Monte Carlo") {
  TwoModeSetup s;
  SimpleRuleSpec rule;
  rule.times = {0.3, 0.6};
  rule.stop_sets = {{false, true}, {true, true}};
  StagedControlSpec control;
  control.times = rule.times;
  Matrix q1(2, 1), q2(2, 1);
  q1 << 0.7, -0.4;
  q2 << -0.2, 0.5;
  control.velocity = {q1, q2};
  Vector a(2);
  a << 0.65, 0.35;
  Vector x0 = Vector::Constant(1, 0.45);
  double alpha = 1.2;

  ExactAction exact = action_exact_simple(s.table, s.lam, x0, control, rule, a, alpha);
  ActionEstimate mc = action_mc(s.table, s.lam, x0, control.policy(), rule.rule(), a, alpha,
                                60000, 99, 2e-4, 2);
  CHECK(std::abs(mc.mean - exact.value) <= 3.0 * mc.std_error + 5e-4);
  CHECK(std::abs(mc.mean_tau - exact.expected_tau) <= 3e-3);
}

TEST_CASE("alpha enters affinely with slope mean tau") {
  TwoModeSetup s;
  SimpleRuleSpec rule;
  rule.times = {0.4, 0.8};
  rule.stop_sets = {{true, false}, {true, true}};
  StagedControlSpec control;
  control.times = rule.times;
  control.velocity = {Matrix::Constant(2, 1, 0.3), Matrix::Constant(2, 1, -0.3)};
  Vector a(2);
  a << 0.5, 0.5;
  Vector x0 = Vector::Zero(1);

  ExactAction e0 = action_exact_simple(s.table, s.lam, x0, control, rule, a, 0.0);
  ExactAction e2 = action_exact_simple(s.table, s.lam, x0, control, rule, a, 2.0);
  CHECK(e2.value - e0.value == doctest::Approx(2.0 * e0.expected_tau).epsilon(1e-14));

  // common random numbers make the Monte Carlo difference exact as well
  ActionEstimate m0 = action_mc(s.table, s.lam, x0, control.policy(), rule.rule(), a, 0.0, 4000,
                                5, 0.002);
  ActionEstimate m2 = action_mc(s.table, s.lam, x0, control.policy(), rule.rule(), a, 2.0, 4000,
                                5, 0.002);
  CHECK(m2.mean - m0.mean == doctest::Approx(2.0 * m0.mean_tau).epsilon(1e-13));
}

TEST_CASE("zero Lagrangian reduces the action to alpha times the stopping mass") {
  TorusGrid grid(1, 16);
  CouplingMatrix lam = sym2();
  LagrangianTable zero(grid, 2, 1.0, 5);  // all table entries are zero
  SimpleRuleSpec rule;
  rule.times = {0.5, 1.0};
  rule.stop_sets = {{false, true}, {true, true}};
  StagedControlSpec control;
  control.times = rule.times;
  control.velocity = {Matrix::Zero(2, 1), Matrix::Zero(2, 1)};
  Vector a(2);
  a << 0.4, 0.6;
  double alpha = 1.7;

  ExactAction exact = action_exact_simple(zero, lam, Vector::Zero(1), control, rule, a, alpha);
  CHECK(exact.lagrangian_part == doctest::Approx(0.0));
  CHECK(exact.value == doctest::Approx(alpha * exact.expected_tau).epsilon(1e-14));

  ActionEstimate mc = action_mc(zero, lam, Vector::Zero(1), control.policy(), rule.rule(), a,
                                alpha, 20000, 11, 0.001);
  CHECK(mc.mean == doctest::Approx(alpha * mc.mean_tau).epsilon(1e-13));
  CHECK(std::abs(mc.mean_tau - exact.expected_tau) <= 3.0 * 0.25 / std::sqrt(20000.0));
}

TEST_CASE("breakdown recombines to the mean under the initial law") {
  TwoModeSetup s;
  Vector a(2);
  a << 0.37, 0.63;
  ActionEstimate est = action_mc(s.table, s.lam, Vector::Zero(1),
                                 ControlPolicy::constant(Vector::Constant(1, 0.4)),
                                 StoppingRule::hitting({1}, 1.5), a, 0.9, 10000, 13, 0.002);
  double recombined = 0;
  for (const auto& slice : est.breakdown) recombined += slice.weight * slice.mean;
  CHECK(est.mean == doctest::Approx(recombined).epsilon(1e-15));
}

TEST_CASE("mismatched exact-evaluation inputs are structural errors") {
  TwoModeSetup s;
  SimpleRuleSpec rule;
  rule.times = {0.3};
  rule.stop_sets = {{true, true}};
  StagedControlSpec control;
  control.times = {0.4};  // does not match the rule's observation times
  control.velocity = {Matrix::Zero(2, 1)};
  CHECK_THROWS_AS(action_exact_simple(s.table, s.lam, Vector::Zero(1), control, rule,
                                      e_of(0, 2), 0.0),
                  std::invalid_argument);
}

TEST_CASE("margin of the zero field is the plain action") {
  ScalarSetup s;
  VectorField zero = VectorField::constant(s.grid, Vector::Zero(1));
  Vector x = Vector::Constant(1, 0.3), y = Vector::Constant(1, 0.7);
  double t0 = 0.8;
  // constant speed reaching y - x within t0
  double lift = 0.4;
  ControlPolicy policy = ControlPolicy::constant(Vector::Constant(1, lift / t0));
  StoppingRule rule = StoppingRule::deterministic(t0);
  MarginEstimate me = subsolution_estimate_margin(zero, s.table, s.lam, x, y, policy, rule,
                                                  Vector::Ones(1), 1.0, 200, 17, 0.001,
                                                  s.grid.h());
  CHECK(me.lhs_mean == 0.0);
  CHECK(me.margin == doctest::Approx(me.action_mean));
  // alpha = max V makes the running cost pointwise nonnegative
  CHECK(me.margin >= -1e-12);
}

TEST_CASE("zero stopping time at the same point gives zero margin") {
  ScalarSetup s;
  VectorField u = VectorField::constant(s.grid, Vector::Constant(1, 0.37));
  Vector x = Vector::Constant(1, 0.25);
  MarginEstimate me = subsolution_estimate_margin(
      u, s.table, s.lam, x, x, ControlPolicy::constant(Vector::Zero(1)),
      StoppingRule::deterministic(0.0), Vector::Ones(1), 1.0, 100, 19, 0.001, s.grid.h());
  CHECK(me.margin == 0.0);
  CHECK(me.std_error == 0.0);
}

TEST_CASE("margin refuses controls that are not cycles") {
  ScalarSetup s;
  VectorField zero = VectorField::constant(s.grid, Vector::Zero(1));
  Vector x = Vector::Constant(1, 0.3), y = Vector::Constant(1, 0.7);
  ControlPolicy wrong = ControlPolicy::constant(Vector::Zero(1));
  CHECK_THROWS_AS(subsolution_estimate_margin(zero, s.table, s.lam, x, y, wrong,
                                              StoppingRule::deterministic(0.5), Vector::Ones(1),
                                              1.0, 100, 23, 0.001, s.grid.h()),
                  std::domain_error);
}

TEST_CASE("policies beyond the table's velocity box are rejected") {
  ScalarSetup s;
  CHECK_THROWS_AS(action_mc(s.table, s.lam, Vector::Zero(1),
                            ControlPolicy::constant(Vector::Constant(1, 5.0)),
                            StoppingRule::deterministic(0.5), Vector::Ones(1), 0.0, 10, 29, 0.01),
                  std::domain_error);
}

TEST_SUITE_END();

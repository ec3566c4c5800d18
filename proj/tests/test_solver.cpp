#include "wchj/solver.hpp"

#include "battery.hpp"
#include "test_helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace wchj;

namespace {

constexpr double kPi = std::numbers::pi;

Matrix sym2_entries() {
  Matrix m(2, 2);
  m << 1, -1, -1, 1;
  return m;
}

Potential cosine1d(double phase = 0.0) {
  Eigen::VectorXi f(1);
  f << 1;
  return Potential::cosine(1, 1.0, f, phase);
}

double classical_pinned_value(double x) {
  // scalar cosine at the critical level, pinned at 0 with b = 0
  double dist = std::min(wchj::wrap01(x), 1.0 - wchj::wrap01(x));
  return (2.0 / kPi) * (1.0 - std::cos(kPi * dist));
}

struct Scalar {
  TorusGrid grid;
  CouplingMatrix lam{Matrix::Zero(1, 1)};
  HamiltonianSpec spec;
  LagrangianTable table;
  explicit Scalar(int n = 100, double q_max = 3.0, int n_q = 121)
      : grid(1, n), spec(grid, {QuadraticMode{cosine1d()}}),
        table(legendre_transform(spec, grid, q_max, n_q)) {}
};

struct TwoMode {
  TorusGrid grid;
  CouplingMatrix lam{sym2_entries()};
  HamiltonianSpec spec;
  LagrangianTable table;
  TwoMode(int n, double phase2, double q_max = 4.3, int n_q = 173)
      : grid(1, n),
        spec(grid, {QuadraticMode{cosine1d()}, QuadraticMode{cosine1d(phase2)}}),
        table(legendre_transform(spec, grid, q_max, n_q)) {}
};

}  // namespace

TEST_SUITE_BEGIN("solver");

TEST_CASE("free Hamiltonians pin to zero as the velocity grid refines") {
  // the discrete optimum crawls to the pin at the smallest positive grid
  // speed, so the value is (q_step/2) * distance and vanishes with q_step
  TorusGrid grid(1, 32);
  CouplingMatrix lam{sym2_entries()};
  HamiltonianSpec spec(grid, {QuadraticMode{Potential::constant(1, 0.0)},
                              QuadraticMode{Potential::constant(1, 0.0)}});
  SolveOptions opts;
  opts.tol = 1e-10;
  opts.max_iter = 60000;
  double prev = 1e300;
  for (int n_q : {21, 81}) {
    LagrangianTable table = legendre_transform(spec, grid, 1.0, n_q);
    PinnedSolution sol = pinned_value(table, lam, 0, Vector::Zero(2), 0.0, 0.01, opts);
    double top = sol.v.values.cwiseAbs().maxCoeff();
    CHECK(sol.v.values.minCoeff() >= -1e-12);
    CHECK(top <= 0.5 * table.q_step() * 0.5 + 1e-6);
    CHECK(top < prev);
    prev = top;
  }
}

TEST_CASE("scalar cosine pinned value matches the closed form") {
  Scalar s;
  PinnedSolution sol = pinned_value(s.table, s.lam, 0, Vector::Zero(1), 1.0, 0.01, {});
  CHECK(sol.report.converged);
  double worst = 0;
  for (long node = 0; node < s.grid.num_nodes(); ++node)
    worst = std::max(worst,
                     std::abs(sol.v.values(node, 0) - classical_pinned_value(s.grid.point(node)[0])));
  CHECK(worst < 0.05);
  // the previous-iterate cap must not have frozen the iteration above the
  // fixed point
  CHECK(sol.report.fixed_point_residual < 1e-7);
  CHECK(sol.report.pin_value[0] == doctest::Approx(0.0));
}

TEST_CASE("identical modes reduce to the scalar solve") {
  Scalar scalar(64, 4.3, 173);
  TwoMode two(64, 0.0);
  PinnedSolution a = pinned_value(scalar.table, scalar.lam, 0, Vector::Zero(1), 1.0, 0.01, {});
  PinnedSolution b = pinned_value(two.table, two.lam, 0, Vector::Zero(2), 1.0, 0.01, {});
  CHECK((b.v.values.col(0) - b.v.values.col(1)).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((b.v.values.col(0) - a.v.values.col(0)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("adding a multiple of ones to the pin shifts the value exactly") {
  TwoMode s(64, -0.6 * kPi);
  Vector b0(2);
  b0 << 0.2, -0.1;
  PinnedSolution base = pinned_value(s.table, s.lam, 5, b0, 1.4, 0.01, {});
  for (double mu : {-1.0, 0.5, 3.0}) {
    PinnedSolution shifted =
        pinned_value(s.table, s.lam, 5, Vector(b0.array() + mu), 1.4, 0.01, {});
    double spread =
        ((shifted.v.values - base.v.values).array() - mu).abs().maxCoeff();
    CHECK(spread < 1e-12);
    // the argmin policy is untouched by the shift
    for (int i = 0; i < 2; ++i)
      CHECK((shifted.policy.velocity[i] - base.policy.velocity[i]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("pin consistency and self-admissibility") {
  TwoMode s(64, -0.6 * kPi);
  Vector b0 = Vector::Zero(2);
  double alpha = 1.4;
  PinnedSolution sol = pinned_value(s.table, s.lam, 0, b0, alpha, 0.01, {});
  for (int i = 0; i < 2; ++i) CHECK(sol.report.pin_value[i] <= b0[i] + 1e-12);
  // re-pinning at the attained value is self-consistent
  AdmissibleReport rep = admissible_check(s.table, s.lam, 0, sol.report.pin_value, alpha, 0.01,
                                          1e-6, 4, 400, 0.005, 424242);
  CHECK(rep.admissible);
  CHECK(rep.max_deviation <= 1e-9);
  CHECK(rep.cycle_min_margin >= -3.0 * rep.cycle_margin_std_error - 0.02);
}

TEST_CASE("an inadmissible pin is detected through the value gap") {
  TwoMode s(100, 0.0);  // identical modes: the pin sits in the Aubry set
  GammaReport g = critical_value(s.table, s.lam, 0.01, {0.1, 0.05}, 0.02);
  double alpha = g.bisection_hi;
  PinnedSolution base = pinned_value(s.table, s.lam, 0, Vector::Zero(2), alpha, 0.01, {});
  Vector bstar = base.report.pin_value;
  // rigidity at the critical level: admissible values form a single line
  // b + mu 1, so lowering one component leaves the set
  Vector lowered = bstar;
  lowered[0] -= 0.5;
  AdmissibleReport rep =
      admissible_check(s.table, s.lam, 0, lowered, alpha, 0.01, 1e-6, 2, 200, 0.005, 31337);
  CHECK_FALSE(rep.admissible);
  CHECK(rep.max_deviation >= 10.0 * rep.tol);
}

TEST_CASE("subsolution residuals accept true subsolutions and reject scaled ones") {
  TwoMode s(100, 0.0);
  double alpha = 1.0;
  // constants are subsolutions when alpha dominates H(x, 0)
  VectorField constant = VectorField::constant(s.grid, Vector::Constant(2, 0.3));
  double tol = default_verify_tolerance(s.spec, s.lam, alpha, s.grid.h(), 0.0);
  CHECK(subsolution_verify(constant, s.spec, s.lam, alpha, tol).pass);

  // the classical scalar subsolution, copied into both modes
  VectorField classical(s.grid, 2);
  for (long node = 0; node < s.grid.num_nodes(); ++node) {
    double v = classical_pinned_value(s.grid.point(node)[0]);
    classical.values(node, 0) = v;
    classical.values(node, 1) = v;
  }
  double tol2 = default_verify_tolerance(s.spec, s.lam, alpha, s.grid.h(), 0.01);
  VerifyReport good = subsolution_verify(classical, s.spec, s.lam, alpha, tol2);
  CHECK(good.pass);

  // doubling one component breaks the gradient budget somewhere
  VectorField broken = classical;
  broken.values.col(1) *= 2.0;
  VerifyReport bad = subsolution_verify(broken, s.spec, s.lam, alpha, tol2);
  CHECK_FALSE(bad.pass);
  CHECK(bad.residual.extreme > tol2);
  CHECK(bad.residual.arg_mode == 1);
}

TEST_CASE("maximality orders candidate subsolutions under the pinned solve") {
  Scalar s;
  double alpha = 1.0;
  PinnedSolution sol = pinned_value(s.table, s.lam, 0, Vector::Zero(1), alpha, 0.01, {});
  CHECK(maximality_check(sol.v, sol.v, 0, Vector::Zero(1), 1e-9));

  // convex combination with the pin constant stays a subsolution and below v
  VectorField half = sol.v;
  half.values *= 0.5;
  double tol = default_verify_tolerance(s.spec, s.lam, alpha, s.grid.h(), 0.01);
  CHECK(subsolution_verify(half, s.spec, s.lam, alpha, tol).pass);
  CHECK(maximality_check(sol.v, half, 0, Vector::Zero(1), 1e-9));

  VectorField above = sol.v;
  above.values.array() += 0.1;
  above.values(0, 0) = 0.0;  // keep the pin
  CHECK_FALSE(maximality_check(sol.v, above, 0, Vector::Zero(1), 1e-9));

  VectorField wrong_pin = sol.v;
  wrong_pin.values.array() += 0.1;
  CHECK_THROWS_AS(maximality_check(sol.v, wrong_pin, 0, Vector::Zero(1), 1e-9),
                  std::invalid_argument);
}

TEST_CASE("critical value of a constant potential is that constant") {
  TorusGrid grid(1, 64);
  double c = 0.35;
  HamiltonianSpec spec(grid, {QuadraticMode{Potential::constant(1, c)}});
  LagrangianTable table = legendre_transform(spec, grid, 2.0, 81);
  CouplingMatrix lam{Matrix::Zero(1, 1)};
  GammaReport g = critical_value(table, lam, 0.01, {0.1, 0.05}, 0.01);
  CHECK(std::abs(g.gamma_discounted - c) < 1e-3);
  CHECK(std::abs(g.gamma_bisection - c) < 0.03);
  CHECK(g.estimators_agree);
}

TEST_CASE("identical coupled modes keep the scalar critical value") {
  Scalar scalar(64, 4.3, 173);
  TwoMode two(64, 0.0);
  GammaReport g1 = critical_value(scalar.table, scalar.lam, 0.01, {0.1, 0.05}, 0.02);
  GammaReport g2 = critical_value(two.table, two.lam, 0.01, {0.1, 0.05}, 0.02);
  CHECK(std::abs(g1.gamma_discounted - g2.gamma_discounted) < 1e-6);
  CHECK(std::abs(g1.gamma_bisection - g2.gamma_bisection) < 0.05);
  CHECK(std::abs(g1.gamma_bisection - 1.0) < 0.1);
}

TEST_CASE("aubry indicator separates the potential maximum from the minimum") {
  Scalar s;
  GammaReport g = critical_value(s.table, s.lam, 0.01, {0.1, 0.05}, 0.02);
  double tol = std::max(0.1, default_verify_tolerance(s.spec, s.lam, g.bisection_hi, s.grid.h(),
                                                      0.01));
  AubryReport at_max =
      aubry_indicator(s.table, s.spec, s.lam, 0, g.bisection_hi, 0.01, tol, 0.02, 5150);
  CHECK(at_max.in_aubry);
  AubryReport at_min = aubry_indicator(s.table, s.spec, s.lam, s.grid.num_nodes() / 2,
                                       g.bisection_hi, 0.01, tol, 0.02, 5150);
  CHECK_FALSE(at_min.in_aubry);
  CHECK(at_min.min_super_residual < -tol);
  CHECK(at_min.witness_node >= 0);
}

TEST_CASE("solver output satisfies the subsolution estimate on random cycles") {
  TwoMode s(64, -0.6 * kPi);
  GammaReport g = critical_value(s.table, s.lam, 0.01, {0.1, 0.05}, 0.02);
  double alpha = g.gamma_bisection + 0.2;
  PinnedSolution sol = pinned_value(s.table, s.lam, 0, Vector::Zero(2), alpha, 0.01, {});
  REQUIRE(sol.report.converged);
  Vector y = s.grid.point(0);
  RngStream rng(60601, 0);
  for (int draw = 0; draw < 8; ++draw) {
    testutil::CycleDraw d = testutil::random_cycle_draw(rng, s.grid, y, 2, s.table.q_max());
    MarginEstimate me =
        subsolution_estimate_margin(sol.v, s.table, s.lam, d.x, y, d.policy, d.rule, d.a, alpha,
                                    1500, 7000 + draw, 0.002, s.grid.h());
    CHECK(me.margin >= -3.0 * me.std_error - 0.1);
  }
}

TEST_CASE("the extracted policy saturates the estimate at the pin") {
  Scalar s(100);
  double alpha = 1.0;
  PinnedSolution sol = pinned_value(s.table, s.lam, 0, Vector::Zero(1), alpha, 0.01, {});
  Vector x = Vector::Constant(1, 0.25);
  Vector y = s.grid.point(0);
  FeedbackTable anchored = sol.policy;
  anchored.anchor = x;
  StoppingRule rule = induced_pin_rule(anchored, 4.0, 0.005);
  CycleCheck cyc = check_cycle(ControlPolicy::feedback(anchored), rule,
                               Vector::Constant(1, wrap01(y[0] - x[0])), s.lam, Vector::Ones(1),
                               0.005, s.grid.h(), 200, 808);
  CHECK(cyc.violation_fraction <= 0.01);
  MarginEstimate me = subsolution_estimate_margin(sol.v, s.table, s.lam, x, y,
                                                  ControlPolicy::feedback(anchored), rule,
                                                  Vector::Ones(1), alpha, 200, 909, 0.005,
                                                  s.grid.h());
  // along optimal data the inequality is tight up to discretization
  CHECK(me.margin >= -3.0 * me.std_error - 0.05);
  CHECK(me.margin <= 0.1);
}

TEST_SUITE_END();

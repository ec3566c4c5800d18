#include "wchj/hamiltonian.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace wchj;

namespace {

Potential cosine1d(double amplitude = 1.0, int freq = 1, double phase = 0.0) {
  Eigen::VectorXi f(1);
  f << freq;
  return Potential::cosine(1, amplitude, f, phase);
}

HamiltonianSpec scalar_cosine_spec(const TorusGrid& grid) {
  return HamiltonianSpec(grid, {QuadraticMode{cosine1d()}});
}

// H = |p|^2/2 + V sampled on a momentum box, for the tabulated code path
TabulatedMode tabulate_quadratic(const TorusGrid& grid, const Potential& v, double p_max,
                                 int n_p) {
  TabulatedMode t;
  t.p_max = p_max;
  t.n_p = n_p;
  long pnodes = grid.dim == 1 ? n_p : static_cast<long>(n_p) * n_p;
  t.values = Matrix::Zero(grid.num_nodes(), pnodes);
  double step = 2.0 * p_max / (n_p - 1);
  for (long xn = 0; xn < grid.num_nodes(); ++xn) {
    Vector x = grid.point(xn);
    for (long pn = 0; pn < pnodes; ++pn) {
      double p0 = -p_max + (pn % n_p) * step;
      double p1 = grid.dim == 2 ? -p_max + (pn / n_p) * step : 0.0;
      t.values(xn, pn) = 0.5 * (p0 * p0 + p1 * p1) + v(x);
    }
  }
  return t;
}

}  // namespace

TEST_SUITE_BEGIN("hamiltonian");

TEST_CASE("grid basics") {
  CHECK_THROWS_AS(TorusGrid(3, 16), std::invalid_argument);
  CHECK_THROWS_AS(TorusGrid(1, 4), std::invalid_argument);
  TorusGrid g(2, 8);
  CHECK(g.num_nodes() == 64);
  CHECK(g.index(-1, 0) == 7);
  CHECK(g.index(8, 1) == 8);
  int ix, iy;
  g.coords(g.index(3, 5), &ix, &iy);
  CHECK(ix == 3);
  CHECK(iy == 5);
}

TEST_CASE("free Hamiltonian is self-dual") {
  TorusGrid grid(1, 16);
  HamiltonianSpec spec(grid, {QuadraticMode{Potential::constant(1, 0.0)}});
  LagrangianTable table = legendre_transform(spec, grid, 2.0, 17);
  for (long xn = 0; xn < grid.num_nodes(); ++xn)
    for (long qn = 0; qn < table.num_q_nodes(); ++qn) {
      double q = table.q_point(qn)[0];
      CHECK(table.node_value(0, xn, qn) == doctest::Approx(0.5 * q * q).epsilon(1e-14));
    }
}

TEST_CASE("cosine potential transforms to q*q/2 - V") {
  TorusGrid grid(1, 32);
  HamiltonianSpec spec = scalar_cosine_spec(grid);
  LagrangianTable closed = legendre_transform(spec, grid, 2.0, 33);
  LagrangianTable numeric = legendre_transform_numeric(spec, grid, 2.0, 33);
  double worst = 0;
  for (long xn = 0; xn < grid.num_nodes(); ++xn) {
    double x = grid.point(xn)[0];
    for (long qn = 0; qn < closed.num_q_nodes(); ++qn) {
      double q = closed.q_point(qn)[0];
      double expect = 0.5 * q * q - std::cos(2.0 * std::numbers::pi * x);
      CHECK(closed.node_value(0, xn, qn) == doctest::Approx(expect).epsilon(1e-13));
      worst = std::max(worst, std::abs(numeric.node_value(0, xn, qn) - expect));
    }
  }
  // the dual objective is exactly quadratic in p, so the parabolic refinement
  // recovers the maximizer to rounding
  CHECK(worst < 1e-9);
}

TEST_CASE("double transform recovers a tabulated Hamiltonian") {
  TorusGrid grid(1, 16);
  Potential v = cosine1d(0.7);
  HamiltonianSpec tab(grid, {HamiltonianSpec::Mode{tabulate_quadratic(grid, v, 4.0, 161)}});
  LagrangianTable l = legendre_transform(tab, grid, 1.5, 25);
  double hp = 2.0 * 4.0 / 160;  // tabulated momentum step
  for (long xn = 0; xn < grid.num_nodes(); ++xn) {
    double x = grid.point(xn)[0];
    for (long qn = 0; qn < l.num_q_nodes(); ++qn) {
      double q = l.q_point(qn)[0];
      double expect = 0.5 * q * q - v(grid.point(xn));
      CHECK(std::abs(l.node_value(0, xn, qn) - expect) < 2.0 * hp * hp);
      (void)x;
    }
  }
}

TEST_CASE("interpolation is exact at nodes and averages midpoints") {
  TorusGrid grid(1, 16);
  HamiltonianSpec spec = scalar_cosine_spec(grid);
  LagrangianTable t = legendre_transform(spec, grid, 2.0, 17);
  Vector x = grid.point(3), q = t.q_point(5);
  CHECK(t.value(0, x, q) == doctest::Approx(t.node_value(0, 3, 5)).epsilon(1e-15));
  Vector xm = 0.5 * (grid.point(3) + grid.point(4));
  double mid = 0.5 * (t.node_value(0, 3, 5) + t.node_value(0, 4, 5));
  CHECK(t.value(0, xm, q) == doctest::Approx(mid).epsilon(1e-14));
}

TEST_CASE("interpolation error for the closed form is second order") {
  Eigen::VectorXi f(1);
  f << 1;
  Potential v = Potential::cosine(1, 1.0, f, 0.3);
  auto worst_err = [&](int n) {
    TorusGrid grid(1, n);
    HamiltonianSpec spec(grid, {QuadraticMode{v}});
    LagrangianTable t = legendre_transform(spec, grid, 2.0, 41);
    double worst = 0;
    RngStream rng(77, n);
    for (int k = 0; k < 200; ++k) {
      Vector x = Vector::Constant(1, rng.uniform());
      Vector q = Vector::Constant(1, 2.0 * (2.0 * rng.uniform() - 1.0));
      double qq;
      {
        // clamp the query to the velocity grid so only the x-interpolation
        // error is measured
        double dq = t.q_step();
        qq = std::round(q[0] / dq) * dq;
        q[0] = std::clamp(qq, -2.0, 2.0);
      }
      double exact = 0.5 * q[0] * q[0] - v(x);
      worst = std::max(worst, std::abs(t.value(0, x, q) - exact));
    }
    return worst;
  };
  double e16 = worst_err(16), e32 = worst_err(32);
  CHECK(e32 < 0.35 * e16);  // ~h^2
}

TEST_CASE("velocity outside the box is a domain error") {
  TorusGrid grid(1, 16);
  HamiltonianSpec spec = scalar_cosine_spec(grid);
  LagrangianTable t = legendre_transform(spec, grid, 1.0, 17);
  CHECK_THROWS_AS(t.value(0, Vector::Zero(1), Vector::Constant(1, 1.5)), std::domain_error);
}

TEST_CASE("tabulated transform reports a too-small momentum box") {
  TorusGrid grid(1, 16);
  // |p| <= 1 cannot host maximizers for |q| up to 3
  HamiltonianSpec tab(grid,
                      {HamiltonianSpec::Mode{tabulate_quadratic(grid, Potential::constant(1, 0.0),
                                                                1.0, 21)}});
  CHECK_THROWS_WITH_AS(legendre_transform(tab, grid, 3.0, 13),
                       doctest::Contains("momentum box too small"), std::domain_error);
}

TEST_CASE("tabulated validation rejects a non-convex mode") {
  TorusGrid grid(1, 8);
  TabulatedMode t = tabulate_quadratic(grid, Potential::constant(1, 0.0), 2.0, 21);
  t.values(0, 10) += 1.0;  // bump at p = 0 breaks midpoint convexity
  CHECK_THROWS_AS(HamiltonianSpec(grid, {HamiltonianSpec::Mode{t}}), std::invalid_argument);
}

TEST_CASE("speed bound closed forms") {
  TorusGrid grid(1, 64);
  HamiltonianSpec spec = scalar_cosine_spec(grid);
  // alpha = max V: ell = sqrt(2 (max V - min V)) = 2
  SpeedBound sb = speed_bound(spec, 1.0, 0.0);
  CHECK(sb.ell_alpha == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(sb.q_max == doctest::Approx(3.0).epsilon(1e-6));

  HamiltonianSpec flat(grid, {QuadraticMode{Potential::constant(1, 0.0)}});
  SpeedBound sb0 = speed_bound(flat, 0.0, 0.0);
  CHECK(sb0.ell_alpha == doctest::Approx(0.0));
  CHECK(sb0.q_max == doctest::Approx(1.0));

  CHECK_THROWS_AS(speed_bound(spec, -1.5, 0.0), std::domain_error);
}

TEST_CASE("resolved bound grows with the coupling budget") {
  TorusGrid grid(1, 64);
  HamiltonianSpec spec = scalar_cosine_spec(grid);
  CouplingMatrix none{Matrix::Zero(1, 1)};
  CHECK(resolved_speed_bound(spec, none, 1.0).ell_alpha == doctest::Approx(2.0).epsilon(1e-6));

  Matrix sym(2, 2);
  sym << 1, -1, -1, 1;
  HamiltonianSpec two(grid, {QuadraticMode{cosine1d()}, QuadraticMode{cosine1d()}});
  double ell = resolved_speed_bound(two, CouplingMatrix{sym}, 1.0).ell_alpha;
  // fixed point of ell = sqrt(2 (1 + ell - (-1))) with budget |L|_inf sqrt(1)/2 = 1
  CHECK(ell == doctest::Approx(1.0 + std::sqrt(5.0)).epsilon(1e-4));
}

TEST_CASE("Fenchel-Young inequality on random samples") {
  TorusGrid grid(1, 32);
  HamiltonianSpec spec = scalar_cosine_spec(grid);
  LagrangianTable t = legendre_transform(spec, grid, 2.0, 65);
  RngStream rng(55, 0);
  for (int k = 0; k < 500; ++k) {
    Vector x = Vector::Constant(1, rng.uniform());
    Vector q = Vector::Constant(1, 2.0 * (2.0 * rng.uniform() - 1.0));
    Vector p = Vector::Constant(1, 4.0 * (2.0 * rng.uniform() - 1.0));
    double lhs = p[0] * q[0];
    double rhs = t.value(0, x, q) + spec.value(0, x, p);
    CHECK(lhs <= rhs + 1e-9 + 2e-2);  // interpolation slack on L
  }
}

TEST_CASE("Lagrangian is convex in q at grid triples") {
  TorusGrid grid(1, 16);
  HamiltonianSpec spec = scalar_cosine_spec(grid);
  LagrangianTable t = legendre_transform_numeric(spec, grid, 2.0, 41);
  for (long xn = 0; xn < grid.num_nodes(); ++xn)
    for (long qn = 1; qn + 1 < t.num_q_nodes(); ++qn) {
      double mid = 0.5 * (t.node_value(0, xn, qn - 1) + t.node_value(0, xn, qn + 1));
      CHECK(t.node_value(0, xn, qn) <= mid + 1e-9);
    }
}

TEST_CASE("separable structure: L + V does not depend on x") {
  TorusGrid grid(1, 32);
  HamiltonianSpec spec = scalar_cosine_spec(grid);
  LagrangianTable t = legendre_transform(spec, grid, 2.0, 21);
  for (long qn = 0; qn < t.num_q_nodes(); ++qn) {
    double ref = t.node_value(0, 0, qn) + spec.potential(0)(grid.point(0));
    for (long xn = 1; xn < grid.num_nodes(); ++xn) {
      double val = t.node_value(0, xn, qn) + spec.potential(0)(grid.point(xn));
      CHECK(val == doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_SUITE_END();

#include "wchj/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace wchj {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

Potential::Potential(int dim, double c0, std::vector<CosineTerm> terms)
    : dim_(dim), c0_(c0), terms_(std::move(terms)) {
  for (const auto& t : terms_)
    if (t.frequency.size() != dim_)
      throw std::invalid_argument("cosine term frequency dimension mismatch");
}

Potential Potential::cosine(int dim, double amplitude, Eigen::VectorXi frequency, double phase) {
  CosineTerm t{amplitude, std::move(frequency), phase};
  return Potential(dim, 0.0, {std::move(t)});
}

double Potential::operator()(const double* x) const {
  double v = c0_;
  for (const auto& t : terms_) {
    double arg = t.phase;
    for (int a = 0; a < dim_; ++a) arg += kTwoPi * t.frequency[a] * x[a];
    v += t.amplitude * std::cos(arg);
  }
  return v;
}

double Potential::lipschitz_bound() const {
  double l = 0;
  for (const auto& t : terms_)
    l += std::abs(t.amplitude) * kTwoPi * std::sqrt(t.frequency.cast<double>().squaredNorm());
  return l;
}

namespace {

template <class F>
double scan_extremum(int dim, int pts, bool want_max, const F& f) {
  double best = want_max ? -1e300 : 1e300;
  double x[2] = {0, 0};
  if (dim == 1) {
    for (int i = 0; i < pts; ++i) {
      x[0] = static_cast<double>(i) / pts;
      double v = f(x);
      best = want_max ? std::max(best, v) : std::min(best, v);
    }
  } else {
    int m = std::min(pts, 512);
    for (int i = 0; i < m; ++i) {
      x[0] = static_cast<double>(i) / m;
      for (int j = 0; j < m; ++j) {
        x[1] = static_cast<double>(j) / m;
        double v = f(x);
        best = want_max ? std::max(best, v) : std::min(best, v);
      }
    }
  }
  return best;
}

}  // namespace

double Potential::grid_min(int scan_points) const {
  return scan_extremum(dim_, scan_points, false, [&](const double* x) { return (*this)(x); });
}

double Potential::grid_max(int scan_points) const {
  return scan_extremum(dim_, scan_points, true, [&](const double* x) { return (*this)(x); });
}

namespace {

// momentum-box helpers shared by tabulated modes and the numeric transform
struct MomentumBox {
  double p_max;
  int n;  // points per axis, odd
  int dim;
  double step() const { return 2.0 * p_max / (n - 1); }
  long nodes() const { return dim == 1 ? n : static_cast<long>(n) * n; }
  void point(long node, double* out) const {
    int ix = static_cast<int>(node % n);
    out[0] = -p_max + ix * step();
    if (dim == 2) out[1] = -p_max + static_cast<int>(node / n) * step();
  }
  bool on_boundary(long node) const {
    int ix = static_cast<int>(node % n);
    if (ix == 0 || ix == n - 1) return true;
    if (dim == 2) {
      int iy = static_cast<int>(node / n);
      if (iy == 0 || iy == n - 1) return true;
    }
    return false;
  }
};

double interp_box(const MomentumBox& box, const double* f, const double* p) {
  double ux = (p[0] + box.p_max) / box.step();
  int ix = std::clamp(static_cast<int>(ux), 0, box.n - 2);
  double wx = ux - ix;
  if (box.dim == 1) return (1.0 - wx) * f[ix] + wx * f[ix + 1];
  double uy = (p[1] + box.p_max) / box.step();
  int iy = std::clamp(static_cast<int>(uy), 0, box.n - 2);
  double wy = uy - iy;
  long r0 = static_cast<long>(box.n) * iy, r1 = r0 + box.n;
  double v0 = (1.0 - wx) * f[r0 + ix] + wx * f[r0 + ix + 1];
  double v1 = (1.0 - wx) * f[r1 + ix] + wx * f[r1 + ix + 1];
  return (1.0 - wy) * v0 + wy * v1;
}

}  // namespace

HamiltonianSpec::HamiltonianSpec(TorusGrid grid, std::vector<Mode> modes)
    : grid_(grid), modes_(std::move(modes)) {
  if (modes_.empty()) throw std::invalid_argument("need at least one mode");
  for (int i = 0; i < static_cast<int>(modes_.size()); ++i) {
    if (const auto* q = std::get_if<QuadraticMode>(&modes_[i])) {
      if (q->potential.dim() != grid_.dim)
        throw std::invalid_argument("potential dimension mismatch");
      continue;
    }
    const auto& t = std::get<TabulatedMode>(modes_[i]);
    if (t.n_p < 3 || t.n_p % 2 == 0)
      throw std::invalid_argument("tabulated momentum grid must be odd with n_p >= 3");
    MomentumBox box{t.p_max, t.n_p, grid_.dim};
    if (t.values.rows() != grid_.num_nodes() || t.values.cols() != box.nodes())
      throw std::invalid_argument("tabulated mode has wrong table shape");
    // midpoint convexity along each momentum axis
    for (long xn = 0; xn < t.values.rows(); ++xn) {
      Vector row = t.values.row(xn).transpose();
      for (long pn = 0; pn < box.nodes(); ++pn) {
        int ix = static_cast<int>(pn % t.n_p);
        int iy = static_cast<int>(pn / t.n_p);
        if (ix > 0 && ix < t.n_p - 1) {
          double mid = 0.5 * (t.values(xn, pn - 1) + t.values(xn, pn + 1));
          if (t.values(xn, pn) > mid + 1e-9)
            throw std::invalid_argument("tabulated mode is not convex in p (axis 1)");
        }
        if (grid_.dim == 2 && iy > 0 && iy < t.n_p - 1) {
          double mid = 0.5 * (t.values(xn, pn - t.n_p) + t.values(xn, pn + t.n_p));
          if (t.values(xn, pn) > mid + 1e-9)
            throw std::invalid_argument("tabulated mode is not convex in p (axis 2)");
        }
      }
      // superlinearity proxy: H/|p| grows along rays when stepping onto the boundary
      for (long pn = 0; pn < box.nodes(); ++pn) {
        if (!box.on_boundary(pn)) continue;
        double p[2] = {0, 0}, inner[2] = {0, 0};
        box.point(pn, p);
        double norm = std::hypot(p[0], grid_.dim == 2 ? p[1] : 0.0);
        if (norm < 0.5 * box.step()) continue;
        double shrink = (norm - box.step()) / norm;
        if (shrink <= 0) continue;
        inner[0] = p[0] * shrink;
        inner[1] = grid_.dim == 2 ? p[1] * shrink : 0.0;
        double hb = t.values(xn, pn);
        double hi = interp_box(box, row.data(), inner);
        if (hb / norm < hi / (norm * shrink) - 1e-9)
          throw std::invalid_argument("tabulated mode fails the superlinearity check");
      }
    }
  }
}

const Potential& HamiltonianSpec::potential(int i) const {
  const auto* q = std::get_if<QuadraticMode>(&modes_[i]);
  if (!q) throw std::invalid_argument("mode is tabulated, no closed-form potential");
  return q->potential;
}

double HamiltonianSpec::value(int i, const double* x, const double* p) const {
  if (const auto* q = std::get_if<QuadraticMode>(&modes_[i])) {
    double n2 = p[0] * p[0] + (grid_.dim == 2 ? p[1] * p[1] : 0.0);
    return 0.5 * n2 + q->potential(x);
  }
  const auto& t = std::get<TabulatedMode>(modes_[i]);
  MomentumBox box{t.p_max, t.n_p, grid_.dim};
  for (int a = 0; a < grid_.dim; ++a)
    if (std::abs(p[a]) > t.p_max + 1e-12)
      throw std::domain_error("momentum outside the tabulated box");
  // interpolate in x (periodic) at fixed p cell, then in p
  double acc[4];
  double ux = wrap01(x[0]) * grid_.n;
  int ix = std::min(static_cast<int>(ux), grid_.n - 1);
  double wx = ux - ix;
  int ix1 = ix + 1 == grid_.n ? 0 : ix + 1;
  if (grid_.dim == 1) {
    Vector hx = (1.0 - wx) * t.values.row(ix) + wx * t.values.row(ix1);
    return interp_box(box, hx.data(), p);
  }
  double uy = wrap01(x[1]) * grid_.n;
  int iy = std::min(static_cast<int>(uy), grid_.n - 1);
  double wy = uy - iy;
  int iy1 = iy + 1 == grid_.n ? 0 : iy + 1;
  long r00 = grid_.index(ix, iy), r10 = grid_.index(ix1, iy);
  long r01 = grid_.index(ix, iy1), r11 = grid_.index(ix1, iy1);
  Vector hx = (1.0 - wx) * (1.0 - wy) * t.values.row(r00) + wx * (1.0 - wy) * t.values.row(r10) +
              (1.0 - wx) * wy * t.values.row(r01) + wx * wy * t.values.row(r11);
  (void)acc;
  return interp_box(box, hx.data(), p);
}

double HamiltonianSpec::min_h_at_zero() const {
  double best = 1e300;
  double zero[2] = {0, 0};
  for (int i = 0; i < modes(); ++i) {
    if (quadratic(i)) {
      best = std::min(best, potential(i).grid_min());
    } else {
      for (long xn = 0; xn < grid_.num_nodes(); ++xn) {
        double x[2];
        grid_.point_raw(xn, x);
        best = std::min(best, value(i, x, zero));
      }
    }
  }
  return best;
}

double HamiltonianSpec::lipschitz_x(double p_radius) const {
  double l = 0;
  for (int i = 0; i < modes(); ++i) {
    if (quadratic(i)) {
      l = std::max(l, potential(i).lipschitz_bound());
    } else {
      // finite-difference bound over the table within the momentum radius
      const auto& t = std::get<TabulatedMode>(mode(i));
      MomentumBox box{t.p_max, t.n_p, grid_.dim};
      for (long pn = 0; pn < box.nodes(); ++pn) {
        double p[2];
        box.point(pn, p);
        if (std::hypot(p[0], grid_.dim == 2 ? p[1] : 0.0) > p_radius + box.step()) continue;
        for (long xn = 0; xn < grid_.num_nodes(); ++xn) {
          int ix, iy;
          grid_.coords(xn, &ix, &iy);
          long xr = grid_.index(ix + 1, iy);
          l = std::max(l, std::abs(t.values(xr, pn) - t.values(xn, pn)) / grid_.h());
          if (grid_.dim == 2) {
            long xu = grid_.index(ix, iy + 1);
            l = std::max(l, std::abs(t.values(xu, pn) - t.values(xn, pn)) / grid_.h());
          }
        }
      }
    }
  }
  return l;
}

LagrangianTable::LagrangianTable(TorusGrid grid, int modes, double q_max, int n_q)
    : grid_(grid), q_max_(q_max), n_q_(n_q) {
  if (q_max <= 0) throw std::invalid_argument("q_max must be positive");
  if (n_q < 3 || n_q % 2 == 0)
    throw std::invalid_argument("velocity grid must be odd with n_q >= 3 so q = 0 is a node");
  values_.assign(modes, Matrix::Zero(grid_.num_nodes(), num_q_nodes()));
}

void LagrangianTable::q_point_raw(long q_node, double* out) const {
  int ix = static_cast<int>(q_node % n_q_);
  out[0] = -q_max_ + ix * q_step();
  if (grid_.dim == 2) out[1] = -q_max_ + static_cast<int>(q_node / n_q_) * q_step();
}

Vector LagrangianTable::q_point(long q_node) const {
  Vector q(grid_.dim);
  q_point_raw(q_node, q.data());
  return q;
}

long LagrangianTable::negated_q_node(long q_node) const {
  int ix = static_cast<int>(q_node % n_q_);
  long neg = n_q_ - 1 - ix;
  if (grid_.dim == 2) {
    int iy = static_cast<int>(q_node / n_q_);
    neg += static_cast<long>(n_q_) * (n_q_ - 1 - iy);
  }
  return neg;
}

double LagrangianTable::value(int mode, const double* x, const double* q) const {
  for (int a = 0; a < grid_.dim; ++a)
    if (std::abs(q[a]) > q_max_ + 1e-12)
      throw std::domain_error("velocity outside the Lagrangian table box (speed bound violated)");
  const Matrix& tab = values_[mode];
  double dq = q_step();
  double ux = (q[0] + q_max_) / dq;
  int qx = std::clamp(static_cast<int>(ux), 0, n_q_ - 2);
  double wqx = ux - qx;

  double ox = wrap01(x[0]) * grid_.n;
  int ix = std::min(static_cast<int>(ox), grid_.n - 1);
  double wxx = ox - ix;
  int ix1 = ix + 1 == grid_.n ? 0 : ix + 1;

  if (grid_.dim == 1) {
    double v0 = (1.0 - wqx) * tab(ix, qx) + wqx * tab(ix, qx + 1);
    double v1 = (1.0 - wqx) * tab(ix1, qx) + wqx * tab(ix1, qx + 1);
    return (1.0 - wxx) * v0 + wxx * v1;
  }

  double uy = (q[1] + q_max_) / dq;
  int qy = std::clamp(static_cast<int>(uy), 0, n_q_ - 2);
  double wqy = uy - qy;
  double oy = wrap01(x[1]) * grid_.n;
  int iy = std::min(static_cast<int>(oy), grid_.n - 1);
  double wyy = oy - iy;
  int iy1 = iy + 1 == grid_.n ? 0 : iy + 1;

  long xs[4] = {grid_.index(ix, iy), grid_.index(ix1, iy), grid_.index(ix, iy1),
                grid_.index(ix1, iy1)};
  double xw[4] = {(1.0 - wxx) * (1.0 - wyy), wxx * (1.0 - wyy), (1.0 - wxx) * wyy, wxx * wyy};
  long q00 = qx + static_cast<long>(n_q_) * qy;
  long q10 = q00 + 1, q01 = q00 + n_q_, q11 = q01 + 1;
  double qw[4] = {(1.0 - wqx) * (1.0 - wqy), wqx * (1.0 - wqy), (1.0 - wqx) * wqy, wqx * wqy};
  long qs[4] = {q00, q10, q01, q11};
  double v = 0;
  for (int xi = 0; xi < 4; ++xi)
    for (int qi = 0; qi < 4; ++qi) v += xw[xi] * qw[qi] * tab(xs[xi], qs[qi]);
  return v;
}

namespace {

double quadratic_refine(double fm, double f0, double fp, double step) {
  // vertex of the parabola through (-step, fm), (0, f0), (step, fp)
  double denom = fm - 2.0 * f0 + fp;
  if (denom >= -1e-300) return 0.0;  // flat or concave-up numerically
  double delta = 0.5 * step * (fm - fp) / denom;
  return std::clamp(delta, -step, step);
}

}  // namespace

LagrangianTable legendre_transform_numeric(const HamiltonianSpec& spec, const TorusGrid& grid,
                                           double q_max, int n_q) {
  LagrangianTable out(grid, spec.modes(), q_max, n_q);
  int dim = grid.dim;
  for (int i = 0; i < spec.modes(); ++i) {
    MomentumBox box{0, 0, dim};
    if (spec.quadratic(i)) {
      box.p_max = q_max + 2.0;
      box.n = 4 * grid.n + 1;
    } else {
      const auto& t = std::get<TabulatedMode>(spec.mode(i));
      box.p_max = t.p_max;
      box.n = t.n_p;
    }
    double step = box.step();
    for (long xn = 0; xn < grid.num_nodes(); ++xn) {
      double x[2];
      grid.point_raw(xn, x);
      for (long qn = 0; qn < out.num_q_nodes(); ++qn) {
        double q[2] = {0, 0};
        out.q_point_raw(qn, q);
        double best = -1e300;
        long arg = -1;
        for (long pn = 0; pn < box.nodes(); ++pn) {
          double p[2] = {0, 0};
          box.point(pn, p);
          double dual = p[0] * q[0] + (dim == 2 ? p[1] * q[1] : 0.0);
          double v = dual - spec.value(i, x, p);
          if (v > best) {
            best = v;
            arg = pn;
          }
        }
        if (box.on_boundary(arg)) {
          std::ostringstream msg;
          msg << "momentum box too small: maximizer on boundary at x=(" << x[0];
          if (dim == 2) msg << "," << x[1];
          msg << "), q=(" << q[0];
          if (dim == 2) msg << "," << q[1];
          msg << ")";
          throw std::domain_error(msg.str());
        }
        // one per-axis parabolic refinement around the grid argmax
        double pc[2] = {0, 0};
        box.point(arg, pc);
        auto dual_val = [&](const double* p) {
          double d = p[0] * q[0] + (dim == 2 ? p[1] * q[1] : 0.0);
          return d - spec.value(i, x, p);
        };
        double pr[2] = {pc[0], pc[1]};
        for (int a = 0; a < dim; ++a) {
          double pm[2] = {pc[0], pc[1]}, pp[2] = {pc[0], pc[1]};
          pm[a] -= step;
          pp[a] += step;
          pr[a] = pc[a] + quadratic_refine(dual_val(pm), best, dual_val(pp), step);
        }
        double refined = dual_val(pr);
        out.node_value(i, xn, qn) = std::max(best, refined);
      }
    }
  }
  return out;
}

LagrangianTable legendre_transform(const HamiltonianSpec& spec, const TorusGrid& grid,
                                   double q_max, int n_q) {
  bool all_quadratic = true;
  for (int i = 0; i < spec.modes(); ++i) all_quadratic &= spec.quadratic(i);
  if (!all_quadratic) {
    // mixed case: numeric transform, then overwrite quadratic modes in closed form
    LagrangianTable out = legendre_transform_numeric(spec, grid, q_max, n_q);
    for (int i = 0; i < spec.modes(); ++i) {
      if (!spec.quadratic(i)) continue;
      for (long xn = 0; xn < grid.num_nodes(); ++xn) {
        double x[2];
        grid.point_raw(xn, x);
        double v = spec.potential(i)(x);
        for (long qn = 0; qn < out.num_q_nodes(); ++qn) {
          double q[2] = {0, 0};
          out.q_point_raw(qn, q);
          double n2 = q[0] * q[0] + (grid.dim == 2 ? q[1] * q[1] : 0.0);
          out.node_value(i, xn, qn) = 0.5 * n2 - v;
        }
      }
    }
    return out;
  }
  LagrangianTable out(grid, spec.modes(), q_max, n_q);
  for (int i = 0; i < spec.modes(); ++i) {
    for (long xn = 0; xn < grid.num_nodes(); ++xn) {
      double x[2];
      grid.point_raw(xn, x);
      double v = spec.potential(i)(x);
      for (long qn = 0; qn < out.num_q_nodes(); ++qn) {
        double q[2] = {0, 0};
        out.q_point_raw(qn, q);
        double n2 = q[0] * q[0] + (grid.dim == 2 ? q[1] * q[1] : 0.0);
        out.node_value(i, xn, qn) = 0.5 * n2 - v;
      }
    }
  }
  return out;
}

SpeedBound speed_bound(const HamiltonianSpec& spec, double alpha, double slack) {
  double budget = alpha + slack;
  double ell = -1.0;
  double grad = 0.0;
  for (int i = 0; i < spec.modes(); ++i) {
    if (spec.quadratic(i)) {
      double vmin = spec.potential(i).grid_min();
      if (budget >= vmin) {
        double e = std::sqrt(2.0 * (budget - vmin));
        if (e > ell) {
          ell = e;
          grad = e;  // |dH/dp| = |p|
        } else {
          grad = std::max(grad, std::min(e, ell));
        }
      }
    } else {
      const auto& t = std::get<TabulatedMode>(spec.mode(i));
      MomentumBox box{t.p_max, t.n_p, spec.dim()};
      Vector minh = t.values.colwise().minCoeff();
      for (long pn = 0; pn < box.nodes(); ++pn) {
        double p[2] = {0, 0};
        box.point(pn, p);
        double norm = std::hypot(p[0], spec.dim() == 2 ? p[1] : 0.0);
        if (minh[pn] <= budget) ell = std::max(ell, norm);
      }
    }
  }
  if (ell < 0.0) throw std::domain_error("speed bound: no admissible momentum budget at this level");
  // velocity radius: steepest momentum slope of H within |p| <= ell, plus one
  for (int i = 0; i < spec.modes(); ++i) {
    if (spec.quadratic(i)) {
      grad = std::max(grad, ell);
      continue;
    }
    const auto& t = std::get<TabulatedMode>(spec.mode(i));
    MomentumBox box{t.p_max, t.n_p, spec.dim()};
    double step = box.step();
    for (long pn = 0; pn < box.nodes(); ++pn) {
      double p[2] = {0, 0};
      box.point(pn, p);
      if (std::hypot(p[0], spec.dim() == 2 ? p[1] : 0.0) > ell + step) continue;
      int ix = static_cast<int>(pn % t.n_p);
      if (ix + 1 < t.n_p)
        grad = std::max(grad, (t.values.col(pn + 1) - t.values.col(pn)).cwiseAbs().maxCoeff() / step);
      if (spec.dim() == 2 && pn + t.n_p < box.nodes())
        grad = std::max(grad,
                        (t.values.col(pn + t.n_p) - t.values.col(pn)).cwiseAbs().maxCoeff() / step);
    }
  }
  return SpeedBound{ell, grad + 1.0};
}

SpeedBound resolved_speed_bound(const HamiltonianSpec& spec, const CouplingMatrix& lambda,
                                double alpha) {
  double c = lambda.inf_norm() * std::sqrt(static_cast<double>(spec.dim())) / 2.0;
  SpeedBound sb = speed_bound(spec, alpha, 0.0);
  for (int it = 0; it < 64; ++it) {
    SpeedBound next = speed_bound(spec, alpha, c * sb.ell_alpha);
    if (std::abs(next.ell_alpha - sb.ell_alpha) < 1e-10) return next;
    sb = next;
  }
  return sb;
}

}  // namespace wchj

#pragma once

#include "wchj/coupling.hpp"
#include "wchj/grid.hpp"

#include <variant>
#include <vector>

namespace wchj {

struct CosineTerm {
  double amplitude = 0;
  Eigen::VectorXi frequency;  // integer wave vector, one entry per axis
  double phase = 0;
};

// V(x) = c0 + sum_k A_k cos(2 pi f_k . x + phi_k)
class Potential {
 public:
  Potential() : dim_(1) {}
  Potential(int dim, double c0, std::vector<CosineTerm> terms);

  static Potential constant(int dim, double c0) { return Potential(dim, c0, {}); }
  static Potential cosine(int dim, double amplitude, Eigen::VectorXi frequency, double phase);

  int dim() const { return dim_; }
  double operator()(const double* x) const;
  double operator()(const Vector& x) const { return (*this)(x.data()); }

  double lipschitz_bound() const;  // sum_k 2 pi |A_k| |f_k|
  double grid_min(int scan_points = 4096) const;
  double grid_max(int scan_points = 4096) const;

  double constant_term() const { return c0_; }
  const std::vector<CosineTerm>& terms() const { return terms_; }

 private:
  int dim_;
  double c0_ = 0;
  std::vector<CosineTerm> terms_;
};

// H(x,p) = |p|^2/2 + V(x)
struct QuadraticMode {
  Potential potential;
};

// H sampled on a spatial grid times a momentum box [-p_max, p_max]^dim with
// n_p points per axis (odd). Row = spatial node, column = momentum node
// (same row-major layout as the grid).
struct TabulatedMode {
  double p_max = 0;
  int n_p = 0;
  Matrix values;
};

class HamiltonianSpec {
 public:
  using Mode = std::variant<QuadraticMode, TabulatedMode>;

  // Tabulated modes are sampled on `grid`; construction validates convexity
  // (midpoint test on the momentum grid) and superlinearity (H/|p| increasing
  // along rays at the box boundary).
  HamiltonianSpec(TorusGrid grid, std::vector<Mode> modes);

  int dim() const { return grid_.dim; }
  int modes() const { return static_cast<int>(modes_.size()); }
  const TorusGrid& grid() const { return grid_; }

  bool quadratic(int i) const { return std::holds_alternative<QuadraticMode>(modes_[i]); }
  const Potential& potential(int i) const;
  const Mode& mode(int i) const { return modes_[i]; }

  double value(int i, const double* x, const double* p) const;
  double value(int i, const Vector& x, const Vector& p) const {
    return value(i, x.data(), p.data());
  }

  double min_h_at_zero() const;             // min over i, x of H_i(x, 0)
  double lipschitz_x(double p_radius) const;  // sup |H(x,p)-H(y,p)|/|x-y| over |p| <= radius

 private:
  TorusGrid grid_;
  std::vector<Mode> modes_;
};

// L_i on the spatial grid times a velocity box [-q_max, q_max]^dim, n_q points
// per axis (odd, so q = 0 is a node). Node layout of the velocity box matches
// the spatial layout.
class LagrangianTable {
 public:
  LagrangianTable() = default;
  LagrangianTable(TorusGrid grid, int modes, double q_max, int n_q);

  const TorusGrid& grid() const { return grid_; }
  int modes() const { return static_cast<int>(values_.size()); }
  double q_max() const { return q_max_; }
  int points_per_axis() const { return n_q_; }
  long num_q_nodes() const { return grid_.dim == 1 ? n_q_ : static_cast<long>(n_q_) * n_q_; }
  double q_step() const { return 2.0 * q_max_ / (n_q_ - 1); }

  void q_point_raw(long q_node, double* out) const;
  Vector q_point(long q_node) const;
  long negated_q_node(long q_node) const;  // index of -q (box is symmetric)

  double& node_value(int mode, long x_node, long q_node) { return values_[mode](x_node, q_node); }
  double node_value(int mode, long x_node, long q_node) const {
    return values_[mode](x_node, q_node);
  }
  const Matrix& table(int mode) const { return values_[mode]; }

  // Multilinear in x (periodic) and q; |q|_inf beyond the box is a domain
  // error, signalling a violated speed bound.
  double value(int mode, const double* x, const double* q) const;
  double value(int mode, const Vector& x, const Vector& q) const {
    return value(mode, x.data(), q.data());
  }

 private:
  TorusGrid grid_;
  double q_max_ = 0;
  int n_q_ = 0;
  std::vector<Matrix> values_;
};

// Convex conjugate per mode. Quadratic modes use the closed form
// L = |q|^2/2 - V(x); tabulated modes go through the numeric maximization.
LagrangianTable legendre_transform(const HamiltonianSpec& spec, const TorusGrid& grid,
                                   double q_max, int n_q);

// Always maximizes p.q - H(x,p) over a momentum grid with one parabolic
// refinement step; kept callable for any mode as the check against the closed
// form. A maximizer on the search-box boundary raises a domain error.
LagrangianTable legendre_transform_numeric(const HamiltonianSpec& spec, const TorusGrid& grid,
                                           double q_max, int n_q);

inline double eval_lagrangian(const LagrangianTable& table, int mode, const Vector& x,
                              const Vector& q) {
  return table.value(mode, x, q);
}

struct SpeedBound {
  double ell_alpha = 0;  // momentum radius available to subsolutions
  double q_max = 0;      // velocity box radius for the dynamic programming step
};

// slack is the additive budget on top of alpha (callers pass |Lambda|_inf
// times the oscillation of u).
SpeedBound speed_bound(const HamiltonianSpec& spec, double alpha, double slack = 0.0);

// Resolves ell <- bound(alpha + |Lambda|_inf * ell * sqrt(N)/2) by monotone
// iteration, since the oscillation budget itself scales with ell.
SpeedBound resolved_speed_bound(const HamiltonianSpec& spec, const CouplingMatrix& lambda,
                                double alpha);

}  // namespace wchj

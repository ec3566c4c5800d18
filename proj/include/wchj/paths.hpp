#pragma once

#include "wchj/coupling.hpp"
#include "wchj/grid.hpp"
#include "wchj/rng.hpp"

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

namespace wchj {

class StoppingRule;  // stopping.hpp

struct Jump {
  double time;
  int index;
};

// Piecewise constant, right-continuous mode path on [0, infinity). The jump
// record determines the value at every time, so queries beyond the sampling
// horizon return the last recorded state.
class IndexPath {
 public:
  IndexPath(int initial, std::vector<Jump> jumps, double horizon);

  int at(double t) const;
  int initial() const { return initial_; }
  const std::vector<Jump>& jumps() const { return jumps_; }
  double horizon() const { return horizon_; }
  int jumps_before(double t) const;  // number of jump times <= t

 private:
  int initial_;
  std::vector<Jump> jumps_;
  double horizon_;
};

// Shifted read-only view: at(t) evaluates the underlying path at t + offset.
struct PathView {
  const IndexPath* path = nullptr;
  double offset = 0;
  int at(double t) const { return path->at(t + offset); }
};

// Event fixing the path's mode at finitely many times.
struct Cylinder {
  std::vector<double> times;
  std::vector<int> indices;
};

// Product formula: (a e^{-t1 L})_{j1} * prod_l (e^{-(t_l - t_{l-1}) L})_{j_{l-1} j_l}.
double cylinder_probability(const CouplingMatrix& lambda, const Vector& a, const Cylinder& c);

// Markov chain with rate matrix -Lambda: holding time in mode i is
// exponential with rate Lambda_ii, jump target j != i with probability
// -Lambda_ij / Lambda_ii.
IndexPath sample_index_path(const CouplingMatrix& lambda, const Vector& a, double horizon,
                            RngStream& rng);
IndexPath sample_index_path(const CouplingMatrix& lambda, const Vector& a, double horizon,
                            std::uint64_t seed, std::uint64_t stream = 0);

// phi_h: new initial state omega(h), jumps after h moved back by h.
IndexPath shift(const IndexPath& omega, double h);

// Keeps omega on [0, t] and regenerates the remainder; used to exercise
// adaptedness (anything measurable at time t must not change).
IndexPath resample_tail(const IndexPath& omega, double t, const CouplingMatrix& lambda,
                        RngStream& rng);

// Cadlag piecewise-constant control path, frozen after the last knot.
struct PiecewiseConstantControl {
  std::vector<double> knots;   // knots[0] == 0, strictly increasing
  std::vector<Vector> values;  // value on [knots[k], knots[k+1])

  Vector at(double t) const;
  void at_raw(double t, double* out) const;
  double bound() const;
  int dim() const { return values.empty() ? 0 : static_cast<int>(values[0].size()); }
};

// Stationary feedback data extracted from a dynamic-programming solve:
// velocity per (mode, grid node), plus per-node stop preferences (meaningful
// at the pin). anchor is the start point that maps displacements to torus
// positions.
struct FeedbackTable {
  TorusGrid grid;
  int modes = 1;
  Vector anchor;
  std::vector<Matrix> velocity;           // per mode: (node, axis)
  std::vector<std::vector<char>> stop;    // per mode: stop preference per node
  long pin_node = -1;

  Vector at(int mode, const Vector& position) const;
  double bound() const;
};

// Nonanticipating control: the velocity at time t depends on t, on the path
// up to t, and on the displacement integrated so far.
class ControlPolicy {
 public:
  static ControlPolicy constant(Vector q);
  static ControlPolicy open_loop(PiecewiseConstantControl xi);
  // velocity on [times[j-1], times[j]) is rows[j](mode observed at times[j-1]);
  // zero after the last level (times[-1] implicitly 0).
  static ControlPolicy staged(std::vector<double> level_times, std::vector<Matrix> level_velocity);
  static ControlPolicy feedback(FeedbackTable table);
  // prefix path on [0, h), then `then` run on the shifted history.
  static ControlPolicy concatenation(PiecewiseConstantControl prefix, double h, ControlPolicy then);

  int dim() const;
  double bound() const;

  void velocity_raw(double t, PathView omega, const double* displacement, double* out) const;
  Vector velocity(double t, const IndexPath& omega, const Vector& displacement) const;

  struct Impl;
  const Impl& impl() const { return *impl_; }

 private:
  explicit ControlPolicy(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

// Integrated control: displacement samples at cell boundaries k*dt. Positions
// are read off as wrap01(anchor + displacement); the running integral itself
// is kept in R^N so windings are not lost.
struct TorusCurve {
  double dt = 0;
  Vector anchor;
  std::vector<Vector> displacement;  // displacement[0] = 0

  Vector displacement_at(double t) const;  // piecewise linear between samples
  Vector position_at(double t) const;
  double horizon() const { return displacement.empty() ? 0.0 : dt * (displacement.size() - 1); }
};

struct RealizedControl {
  PiecewiseConstantControl xi;
  TorusCurve curve;
};

// Evaluates the policy cell by cell on the dt grid (the control is constant
// on each cell) and accumulates the displacement integral.
RealizedControl realize_control(const ControlPolicy& policy, const IndexPath& omega,
                                double horizon, double dt_curve);

// Shared cell walker: fn(t_left, mode_at_left, displacement_left, q, cell_len).
// realize_control and the Monte Carlo integrators run exactly this loop, so
// their arithmetic agrees term by term.
template <class Fn>
void walk_control_cells(const ControlPolicy& policy, const IndexPath& omega, double horizon,
                        double dt, Fn&& fn) {
  int dim = policy.dim();
  double disp[2] = {0, 0};
  double q[2] = {0, 0};
  PathView view{&omega, 0.0};
  for (long k = 0;; ++k) {
    double t = k * dt;
    if (t >= horizon - 1e-12 * (1.0 + horizon)) break;
    double len = std::min(dt, horizon - t);
    int mode = omega.at(t);
    policy.velocity_raw(t, view, disp, q);
    fn(t, mode, disp, q, len);
    for (int a = 0; a < dim; ++a) disp[a] += len * q[a];
  }
}

struct CycleCheck {
  double violation_fraction = 0;
  long samples = 0;
  double tolerance = 0;
};

// Fraction of sampled paths whose displacement at the stopping time misses the
// target by more than `tolerance` (torus distance).
CycleCheck check_cycle(const ControlPolicy& policy, const StoppingRule& rule,
                       const Vector& displacement, const CouplingMatrix& lambda, const Vector& a,
                       double dt_curve, double tolerance, long samples, std::uint64_t seed,
                       int threads = 1);

// Line format: per block "path M N T" header, then "t index" lines with the
// t = 0 line carrying the initial mode. Curves: "curve M N T" then "t x1 [x2]".
void write_paths(std::ostream& os, const std::vector<IndexPath>& paths, int modes, int space_dim);
std::vector<IndexPath> read_paths(std::istream& is);
void write_curve(std::ostream& os, const TorusCurve& curve, int modes, int space_dim);

}  // namespace wchj

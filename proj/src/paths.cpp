#include "wchj/paths.hpp"

#include "wchj/parallel.hpp"
#include "wchj/stopping.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace wchj {

IndexPath::IndexPath(int initial, std::vector<Jump> jumps, double horizon)
    : initial_(initial), jumps_(std::move(jumps)), horizon_(horizon) {
  if (horizon_ < 0) throw std::invalid_argument("path horizon must be nonnegative");
  int prev = initial_;
  double prev_t = 0.0;
  for (const auto& j : jumps_) {
    if (!(j.time > prev_t) || !(j.time > 0))
      throw std::invalid_argument("jump times must be strictly increasing and positive");
    if (j.index == prev) throw std::invalid_argument("consecutive path indices must differ");
    prev = j.index;
    prev_t = j.time;
  }
}

int IndexPath::at(double t) const {
  int state = initial_;
  for (const auto& j : jumps_) {
    if (j.time > t) break;
    state = j.index;
  }
  return state;
}

int IndexPath::jumps_before(double t) const {
  int k = 0;
  for (const auto& j : jumps_) {
    if (j.time > t) break;
    ++k;
  }
  return k;
}

double cylinder_probability(const CouplingMatrix& lambda, const Vector& a, const Cylinder& c) {
  if (c.times.empty() || c.times.size() != c.indices.size())
    throw std::invalid_argument("cylinder needs matching, nonempty times and indices");
  for (std::size_t l = 0; l < c.times.size(); ++l) {
    if (c.times[l] < 0 || (l > 0 && !(c.times[l] > c.times[l - 1])))
      throw std::invalid_argument("cylinder times must be nonnegative and strictly increasing");
    if (c.indices[l] < 0 || c.indices[l] >= lambda.modes())
      throw std::invalid_argument("cylinder index out of range");
  }
  if (!is_probability_vector(a)) throw std::invalid_argument("initial law is not a probability vector");

  Vector row = (a.transpose() * semigroup(lambda, c.times[0])).transpose();
  double p = row[c.indices[0]];
  for (std::size_t l = 1; l < c.times.size(); ++l) {
    Matrix e = semigroup(lambda, c.times[l] - c.times[l - 1]);
    p *= e(c.indices[l - 1], c.indices[l]);
  }
  return p;
}

IndexPath sample_index_path(const CouplingMatrix& lambda, const Vector& a, double horizon,
                            RngStream& rng) {
  if (horizon <= 0) throw std::invalid_argument("sampling horizon must be positive");
  if (!is_probability_vector(a)) throw std::invalid_argument("initial law is not a probability vector");
  int m = lambda.modes();
  int state = rng.discrete(a);
  int initial = state;
  std::vector<Jump> jumps;
  double t = 0.0;
  while (true) {
    double rate = lambda.rate(state);
    double hold = rng.exponential(rate);
    if (!(t + hold <= horizon)) break;  // also exits on infinite holds
    t += hold;
    Vector w = Vector::Zero(m);
    for (int j = 0; j < m; ++j)
      if (j != state) w[j] = -lambda.entries()(state, j) / rate;
    state = rng.discrete(w);
    jumps.push_back(Jump{t, state});
  }
  return IndexPath(initial, std::move(jumps), horizon);
}

IndexPath sample_index_path(const CouplingMatrix& lambda, const Vector& a, double horizon,
                            std::uint64_t seed, std::uint64_t stream) {
  RngStream rng(seed, stream);
  return sample_index_path(lambda, a, horizon, rng);
}

IndexPath shift(const IndexPath& omega, double h) {
  if (h < 0) throw std::invalid_argument("shift requires h >= 0");
  if (h == 0) return omega;
  int initial = omega.at(h);
  std::vector<Jump> jumps;
  for (const auto& j : omega.jumps())
    if (j.time > h) jumps.push_back(Jump{j.time - h, j.index});
  return IndexPath(initial, std::move(jumps), std::max(0.0, omega.horizon() - h));
}

IndexPath resample_tail(const IndexPath& omega, double t, const CouplingMatrix& lambda,
                        RngStream& rng) {
  std::vector<Jump> jumps;
  for (const auto& j : omega.jumps())
    if (j.time <= t) jumps.push_back(j);
  int state = omega.at(t);
  double now = t;
  int m = lambda.modes();
  while (true) {
    double rate = lambda.rate(state);
    double hold = rng.exponential(rate);
    if (!(now + hold <= omega.horizon())) break;
    now += hold;
    Vector w = Vector::Zero(m);
    for (int j = 0; j < m; ++j)
      if (j != state) w[j] = -lambda.entries()(state, j) / rate;
    state = rng.discrete(w);
    jumps.push_back(Jump{now, state});
  }
  return IndexPath(omega.initial(), std::move(jumps), omega.horizon());
}

Vector PiecewiseConstantControl::at(double t) const {
  Vector out(dim());
  at_raw(t, out.data());
  return out;
}

void PiecewiseConstantControl::at_raw(double t, double* out) const {
  std::size_t k = 0;
  while (k + 1 < knots.size() && knots[k + 1] <= t) ++k;
  for (int a = 0; a < dim(); ++a) out[a] = values[k][a];
}

double PiecewiseConstantControl::bound() const {
  double b = 0;
  for (const auto& v : values) b = std::max(b, v.cwiseAbs().maxCoeff());
  return b;
}

Vector FeedbackTable::at(int mode, const Vector& position) const {
  long node = grid.nearest_node(position);
  return velocity[mode].row(node).transpose();
}

double FeedbackTable::bound() const {
  double b = 0;
  for (const auto& v : velocity) b = std::max(b, v.cwiseAbs().maxCoeff());
  return b;
}

struct ControlPolicy::Impl {
  enum class Kind { constant, open_loop, staged, feedback, concatenation } kind;
  int dim = 1;
  double bound = 0;

  Vector const_q;

  PiecewiseConstantControl open;

  std::vector<double> stage_times;
  std::vector<Matrix> stage_q;  // per level: (mode, axis)

  FeedbackTable table;

  PiecewiseConstantControl prefix;
  double prefix_len = 0;
  double prefix_disp[2] = {0, 0};
  std::shared_ptr<const Impl> then;
};

ControlPolicy ControlPolicy::constant(Vector q) {
  auto impl = std::make_shared<Impl>();
  impl->kind = Impl::Kind::constant;
  impl->dim = static_cast<int>(q.size());
  impl->bound = q.cwiseAbs().maxCoeff();
  impl->const_q = std::move(q);
  return ControlPolicy(std::move(impl));
}

ControlPolicy ControlPolicy::open_loop(PiecewiseConstantControl xi) {
  if (xi.knots.empty() || xi.knots[0] != 0.0 || xi.knots.size() != xi.values.size())
    throw std::invalid_argument("open-loop control needs knots starting at 0 matching values");
  auto impl = std::make_shared<Impl>();
  impl->kind = Impl::Kind::open_loop;
  impl->dim = xi.dim();
  impl->bound = xi.bound();
  impl->open = std::move(xi);
  return ControlPolicy(std::move(impl));
}

ControlPolicy ControlPolicy::staged(std::vector<double> level_times,
                                    std::vector<Matrix> level_velocity) {
  if (level_times.empty() || level_times.size() != level_velocity.size())
    throw std::invalid_argument("staged control needs one velocity block per level");
  for (std::size_t j = 0; j < level_times.size(); ++j)
    if (!(level_times[j] > (j == 0 ? 0.0 : level_times[j - 1])))
      throw std::invalid_argument("staged level times must be strictly increasing and positive");
  auto impl = std::make_shared<Impl>();
  impl->kind = Impl::Kind::staged;
  impl->dim = static_cast<int>(level_velocity[0].cols());
  double b = 0;
  for (const auto& m : level_velocity) b = std::max(b, m.cwiseAbs().maxCoeff());
  impl->bound = b;
  impl->stage_times = std::move(level_times);
  impl->stage_q = std::move(level_velocity);
  return ControlPolicy(std::move(impl));
}

ControlPolicy ControlPolicy::feedback(FeedbackTable table) {
  auto impl = std::make_shared<Impl>();
  impl->kind = Impl::Kind::feedback;
  impl->dim = table.grid.dim;
  impl->bound = table.bound();
  impl->table = std::move(table);
  return ControlPolicy(std::move(impl));
}

ControlPolicy ControlPolicy::concatenation(PiecewiseConstantControl prefix, double h,
                                           ControlPolicy then) {
  if (!(h > 0)) throw std::invalid_argument("concatenation needs a positive prefix length");
  auto impl = std::make_shared<Impl>();
  impl->kind = Impl::Kind::concatenation;
  impl->dim = then.dim();
  impl->bound = std::max(prefix.bound(), then.bound());
  impl->prefix_len = h;
  // displacement of the prefix at h, needed to hand the inner policy its own frame
  double disp[2] = {0, 0};
  for (std::size_t k = 0; k < prefix.knots.size(); ++k) {
    double lo = prefix.knots[k];
    double hi = k + 1 < prefix.knots.size() ? std::min(prefix.knots[k + 1], h) : h;
    if (hi <= lo) continue;
    for (int a = 0; a < impl->dim; ++a) disp[a] += (hi - lo) * prefix.values[k][a];
  }
  impl->prefix_disp[0] = disp[0];
  impl->prefix_disp[1] = disp[1];
  impl->prefix = std::move(prefix);
  impl->then = then.impl_;
  return ControlPolicy(std::move(impl));
}

int ControlPolicy::dim() const { return impl_->dim; }
double ControlPolicy::bound() const { return impl_->bound; }

namespace {

void velocity_impl(const ControlPolicy::Impl& impl, double t, PathView omega,
                   const double* disp, double* out) {
  using Kind = ControlPolicy::Impl::Kind;
  switch (impl.kind) {
    case Kind::constant:
      for (int a = 0; a < impl.dim; ++a) out[a] = impl.const_q[a];
      return;
    case Kind::open_loop:
      impl.open.at_raw(t, out);
      return;
    case Kind::staged: {
      // level j covers [t_{j-1}, t_j); the row is picked by the mode at the
      // level start, which is measurable there
      std::size_t j = 0;
      double level_start = 0.0;
      while (j < impl.stage_times.size() && impl.stage_times[j] <= t) {
        level_start = impl.stage_times[j];
        ++j;
      }
      if (j >= impl.stage_times.size() && t >= impl.stage_times.back()) {
        for (int a = 0; a < impl.dim; ++a) out[a] = 0.0;
        return;
      }
      int mode = omega.at(level_start);
      for (int a = 0; a < impl.dim; ++a) out[a] = impl.stage_q[j](mode, a);
      return;
    }
    case Kind::feedback: {
      double pos[2] = {0, 0};
      for (int a = 0; a < impl.dim; ++a) pos[a] = wrap01(impl.table.anchor[a] + disp[a]);
      long node = impl.table.grid.nearest_node(pos);
      int mode = omega.at(t);
      const Matrix& vel = impl.table.velocity[mode];
      for (int a = 0; a < impl.dim; ++a) out[a] = vel(node, a);
      return;
    }
    case Kind::concatenation: {
      if (t < impl.prefix_len) {
        impl.prefix.at_raw(t, out);
        return;
      }
      double inner_disp[2] = {disp[0] - impl.prefix_disp[0], disp[1] - impl.prefix_disp[1]};
      PathView shifted{omega.path, omega.offset + impl.prefix_len};
      velocity_impl(*impl.then, t - impl.prefix_len, shifted, inner_disp, out);
      return;
    }
  }
}

}  // namespace

void ControlPolicy::velocity_raw(double t, PathView omega, const double* displacement,
                                 double* out) const {
  velocity_impl(*impl_, t, omega, displacement, out);
}

Vector ControlPolicy::velocity(double t, const IndexPath& omega, const Vector& displacement) const {
  Vector out(dim());
  velocity_raw(t, PathView{&omega, 0.0}, displacement.data(), out.data());
  return out;
}

Vector TorusCurve::displacement_at(double t) const {
  int dim = anchor.size() ? static_cast<int>(anchor.size())
                          : (displacement.empty() ? 1 : static_cast<int>(displacement[0].size()));
  if (displacement.empty()) return Vector::Zero(dim);
  if (t <= 0) return displacement.front();
  double u = t / dt;
  std::size_t k = static_cast<std::size_t>(u);
  if (k + 1 >= displacement.size()) return displacement.back();
  double w = u - k;
  return (1.0 - w) * displacement[k] + w * displacement[k + 1];
}

Vector TorusCurve::position_at(double t) const { return wrap01(anchor + displacement_at(t)); }

RealizedControl realize_control(const ControlPolicy& policy, const IndexPath& omega,
                                double horizon, double dt_curve) {
  if (!(dt_curve > 0)) throw std::invalid_argument("dt_curve must be positive");
  int dim = policy.dim();
  RealizedControl out;
  out.curve.dt = dt_curve;
  out.curve.anchor = Vector::Zero(dim);
  out.curve.displacement.push_back(Vector::Zero(dim));
  double running[2] = {0, 0};
  walk_control_cells(policy, omega, horizon, dt_curve,
                     [&](double t, int /*mode*/, const double* /*disp*/, const double* q,
                         double len) {
                       Vector qv(dim);
                       for (int a = 0; a < dim; ++a) qv[a] = q[a];
                       if (out.xi.values.empty() ||
                           (out.xi.values.back() - qv).cwiseAbs().maxCoeff() > 0.0) {
                         out.xi.knots.push_back(t);
                         out.xi.values.push_back(qv);
                       }
                       for (int a = 0; a < dim; ++a) running[a] += len * q[a];
                       Vector d(dim);
                       for (int a = 0; a < dim; ++a) d[a] = running[a];
                       out.curve.displacement.push_back(d);
                     });
  if (out.xi.knots.empty()) {
    out.xi.knots.push_back(0.0);
    out.xi.values.push_back(Vector::Zero(dim));
  }
  return out;
}

CycleCheck check_cycle(const ControlPolicy& policy, const StoppingRule& rule,
                       const Vector& displacement, const CouplingMatrix& lambda, const Vector& a,
                       double dt_curve, double tolerance, long samples, std::uint64_t seed,
                       int threads) {
  int dim = policy.dim();
  double horizon = rule.cap() + 1.0;
  std::vector<char> bad(samples, 0);
  parallel_for(static_cast<std::size_t>(samples), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k) {
      RngStream rng(seed, k);
      IndexPath omega = sample_index_path(lambda, a, horizon, rng);
      double tau = rule.evaluate(omega);
      double disp[2] = {0, 0};
      walk_control_cells(policy, omega, tau, dt_curve,
                         [&](double, int, const double*, const double* q, double len) {
                           for (int c = 0; c < dim; ++c) disp[c] += len * q[c];
                         });
      double wrapped[2] = {wrap01(disp[0]), dim == 2 ? wrap01(disp[1]) : 0.0};
      double target[2] = {displacement[0], dim == 2 ? displacement[1] : 0.0};
      if (torus_distance_raw(wrapped, target, dim) > tolerance) bad[k] = 1;
    }
  });
  long violations = 0;
  for (char b : bad) violations += b;
  return CycleCheck{static_cast<double>(violations) / static_cast<double>(samples), samples,
                    tolerance};
}

// mode indices are 1-based in serialized artifacts
void write_paths(std::ostream& os, const std::vector<IndexPath>& paths, int modes, int space_dim) {
  os.precision(17);
  for (const auto& p : paths) {
    os << "path " << modes << " " << space_dim << " " << p.horizon() << "\n";
    os << 0.0 << " " << (p.initial() + 1) << "\n";
    for (const auto& j : p.jumps()) os << j.time << " " << (j.index + 1) << "\n";
    os << "\n";
  }
}

std::vector<IndexPath> read_paths(std::istream& is) {
  std::vector<IndexPath> out;
  std::string line;
  int initial = 0;
  double horizon = 0;
  std::vector<Jump> jumps;
  bool in_block = false;
  auto flush = [&] {
    if (in_block) out.emplace_back(initial, jumps, horizon);
    jumps.clear();
    in_block = false;
  };
  while (std::getline(is, line)) {
    if (line.empty()) {
      flush();
      continue;
    }
    std::istringstream ss(line);
    std::string head;
    if (line.rfind("path", 0) == 0) {
      flush();
      int m, n;
      ss >> head >> m >> n >> horizon;
      in_block = true;
      initial = 0;
      continue;
    }
    double t;
    int idx;
    if (!(ss >> t >> idx)) throw std::invalid_argument("malformed path line: " + line);
    if (t == 0.0)
      initial = idx - 1;
    else
      jumps.push_back(Jump{t, idx - 1});
  }
  flush();
  return out;
}

void write_curve(std::ostream& os, const TorusCurve& curve, int modes, int space_dim) {
  os.precision(17);
  os << "curve " << modes << " " << space_dim << " " << curve.horizon() << "\n";
  for (std::size_t k = 0; k < curve.displacement.size(); ++k) {
    Vector pos = wrap01(curve.anchor + curve.displacement[k]);
    os << k * curve.dt;
    for (int a = 0; a < space_dim; ++a) os << " " << pos[a];
    os << "\n";
  }
  os << "\n";
}

}  // namespace wchj

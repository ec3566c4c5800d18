#include "wchj/stopping.hpp"

#include "wchj/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wchj {

struct StoppingRule::Impl {
  Kind kind;
  double cap = 0;
  double floor = 0;

  double t0 = 0;                 // deterministic
  std::vector<char> mode_set;    // hitting / curve_hitting
  int jump_n = 0;                // nth_jump
  std::vector<double> times;     // simple
  std::vector<std::vector<bool>> stop_sets;
  int level = 0;                 // dyadic
  std::shared_ptr<const Impl> base;
  // curve_hitting
  std::shared_ptr<const ControlPolicy> policy;
  Vector anchor, target;
  double radius = 0, dt_curve = 0;
};

StoppingRule StoppingRule::deterministic(double t0) {
  if (t0 < 0) throw std::invalid_argument("deterministic stopping time must be nonnegative");
  auto impl = std::make_shared<Impl>();
  impl->kind = Kind::deterministic;
  impl->t0 = t0;
  impl->cap = t0;
  return StoppingRule(std::move(impl));
}

namespace {
std::vector<char> make_mode_set(const std::vector<int>& modes) {
  int top = 0;
  for (int m : modes) top = std::max(top, m);
  std::vector<char> set(top + 1, 0);
  for (int m : modes) {
    if (m < 0) throw std::invalid_argument("negative mode index");
    set[m] = 1;
  }
  return set;
}
bool in_set(const std::vector<char>& set, int mode) {
  return mode >= 0 && mode < static_cast<int>(set.size()) && set[mode];
}
}  // namespace

StoppingRule StoppingRule::hitting(std::vector<int> modes, double cap, double floor) {
  if (!(cap > 0) || floor < 0 || floor > cap)
    throw std::invalid_argument("hitting rule needs 0 <= floor <= cap, cap > 0");
  auto impl = std::make_shared<Impl>();
  impl->kind = Kind::hitting;
  impl->mode_set = make_mode_set(modes);
  impl->cap = cap;
  impl->floor = floor;
  return StoppingRule(std::move(impl));
}

StoppingRule StoppingRule::nth_jump(int n, double cap, double floor) {
  if (n < 1 || !(cap > 0) || floor < 0 || floor > cap)
    throw std::invalid_argument("nth-jump rule needs n >= 1 and 0 <= floor <= cap");
  auto impl = std::make_shared<Impl>();
  impl->kind = Kind::nth_jump;
  impl->jump_n = n;
  impl->cap = cap;
  impl->floor = floor;
  return StoppingRule(std::move(impl));
}

StoppingRule StoppingRule::simple(std::vector<double> times,
                                  std::vector<std::vector<bool>> stop_sets) {
  if (times.empty() || times.size() != stop_sets.size())
    throw std::invalid_argument("simple rule needs one stop set per time");
  for (std::size_t j = 0; j < times.size(); ++j)
    if (!(times[j] > (j == 0 ? 0.0 : times[j - 1])))
      throw std::invalid_argument("simple rule times must be strictly increasing and positive");
  stop_sets.back().assign(stop_sets.back().size(), true);  // boundedness: forced stop at the end
  auto impl = std::make_shared<Impl>();
  impl->kind = Kind::simple;
  impl->times = std::move(times);
  impl->stop_sets = std::move(stop_sets);
  impl->cap = impl->times.back();
  return StoppingRule(std::move(impl));
}

StoppingRule StoppingRule::grid_hitting(std::vector<int> modes, int num_modes, double dt_obs,
                                        int levels) {
  if (!(dt_obs > 0) || levels < 1) throw std::invalid_argument("grid_hitting needs dt_obs > 0");
  std::vector<double> times(levels);
  std::vector<std::vector<bool>> sets(levels, std::vector<bool>(num_modes, false));
  auto set = make_mode_set(modes);
  for (int j = 0; j < levels; ++j) {
    times[j] = dt_obs * (j + 1);
    for (int m = 0; m < num_modes; ++m) sets[j][m] = in_set(set, m);
  }
  return simple(std::move(times), std::move(sets));
}

StoppingRule StoppingRule::dyadic(int level, StoppingRule base) {
  if (level < 0) throw std::invalid_argument("dyadic level must be nonnegative");
  auto impl = std::make_shared<Impl>();
  impl->kind = Kind::dyadic;
  impl->level = level;
  impl->base = base.impl_;
  double scale = std::ldexp(1.0, level);  // 2^level
  impl->cap = (std::floor(base.cap() * scale) + 1.0) / scale;
  return StoppingRule(std::move(impl));
}

StoppingRule StoppingRule::curve_hitting(ControlPolicy policy, Vector anchor, Vector target,
                                         double radius, std::vector<int> modes, double cap,
                                         double dt_curve, double floor) {
  if (!(cap > 0) || !(dt_curve > 0) || !(radius >= 0) || floor < 0 || floor > cap)
    throw std::invalid_argument("curve_hitting parameters out of range");
  auto impl = std::make_shared<Impl>();
  impl->kind = Kind::curve_hitting;
  impl->policy = std::make_shared<ControlPolicy>(std::move(policy));
  impl->anchor = std::move(anchor);
  impl->target = std::move(target);
  impl->radius = radius;
  impl->mode_set = make_mode_set(modes);
  impl->cap = cap;
  impl->dt_curve = dt_curve;
  impl->floor = floor;
  return StoppingRule(std::move(impl));
}

double StoppingRule::cap() const { return impl_->cap; }
StoppingRule::Kind StoppingRule::kind() const { return impl_->kind; }

double StoppingRule::evaluate(const IndexPath& omega) const {
  const Impl& s = *impl_;
  switch (s.kind) {
    case Kind::deterministic:
      return s.t0;
    case Kind::hitting: {
      double raw = s.cap;
      if (in_set(s.mode_set, omega.initial())) {
        raw = 0.0;
      } else {
        for (const auto& j : omega.jumps()) {
          if (j.time > s.cap) break;
          if (in_set(s.mode_set, j.index)) {
            raw = j.time;
            break;
          }
        }
      }
      return std::min(s.cap, std::max(s.floor, raw));
    }
    case Kind::nth_jump: {
      double raw = s.cap;
      if (static_cast<int>(omega.jumps().size()) >= s.jump_n)
        raw = omega.jumps()[s.jump_n - 1].time;
      return std::min(s.cap, std::max(s.floor, raw));
    }
    case Kind::simple: {
      for (std::size_t j = 0; j < s.times.size(); ++j) {
        int mode = omega.at(s.times[j]);
        if (s.stop_sets[j][mode]) return s.times[j];
      }
      return s.times.back();  // unreachable: last set stops everything
    }
    case Kind::dyadic: {
      double tau = StoppingRule(s.base).evaluate(omega);
      double scale = std::ldexp(1.0, s.level);
      return (std::floor(tau * scale) + 1.0) / scale;
    }
    case Kind::curve_hitting: {
      double tau = s.cap;
      const int dim = s.policy->dim();
      bool done = false;
      walk_control_cells(*s.policy, omega, s.cap, s.dt_curve,
                         [&](double t, int mode, const double* disp, const double*, double) {
                           if (done || t < s.floor) return;
                           if (!in_set(s.mode_set, mode)) return;
                           double pos[2] = {wrap01(s.anchor[0] + disp[0]),
                                            dim == 2 ? wrap01(s.anchor[1] + disp[1]) : 0.0};
                           double tgt[2] = {s.target[0], dim == 2 ? s.target[1] : 0.0};
                           if (torus_distance_raw(pos, tgt, dim) <= s.radius) {
                             tau = t;
                             done = true;
                           }
                         });
      return std::max(tau, s.floor);
    }
  }
  return s.cap;
}

bool StoppingRule::is_simple() const {
  switch (impl_->kind) {
    case Kind::deterministic:
    case Kind::simple:
    case Kind::dyadic:
      return true;
    default:
      return false;
  }
}

std::vector<double> StoppingRule::values() const {
  switch (impl_->kind) {
    case Kind::deterministic:
      return {impl_->t0};
    case Kind::simple:
      return impl_->times;
    case Kind::dyadic: {
      double scale = std::ldexp(1.0, impl_->level);
      long top = static_cast<long>(std::floor(StoppingRule(impl_->base).cap() * scale)) + 1;
      std::vector<double> vals;
      vals.reserve(top);
      for (long j = 1; j <= top; ++j) vals.push_back(j / scale);
      return vals;
    }
    default:
      throw std::invalid_argument("stopping rule is not simple");
  }
}

bool SimpleDecomposition::in_tail(int j, const IndexPath& omega) const {
  // F_j = {tau >= t_j} = complement of the union of earlier events
  for (int i = 0; i < j; ++i)
    if (event[i](omega)) return false;
  return true;
}

SimpleDecomposition decompose_simple(const StoppingRule& rule) {
  if (!rule.is_simple()) throw std::invalid_argument("decompose_simple needs a simple rule");
  SimpleDecomposition out;
  out.times = rule.values();
  for (double t : out.times)
    out.event.push_back([rule, t](const IndexPath& omega) { return rule.evaluate(omega) == t; });
  return out;
}

Matrix estimate_stopped_matrix(const CouplingMatrix& lambda, const StoppingRule& rule,
                               long samples_per_row, std::uint64_t seed, int threads) {
  int m = lambda.modes();
  double horizon = rule.cap() + 1.0;
  Matrix counts = Matrix::Zero(m, m);
  // strata: row i uses streams [i * samples, (i+1) * samples)
  for (int i = 0; i < m; ++i) {
    Vector ei = Vector::Zero(m);
    ei[i] = 1.0;
    std::vector<int> hit(samples_per_row);
    parallel_for(static_cast<std::size_t>(samples_per_row), threads,
                 [&](std::size_t lo, std::size_t hi) {
                   for (std::size_t k = lo; k < hi; ++k) {
                     RngStream rng(seed, static_cast<std::uint64_t>(i) * samples_per_row + k);
                     IndexPath omega = sample_index_path(lambda, ei, horizon, rng);
                     hit[k] = omega.at(rule.evaluate(omega));
                   }
                 });
    for (long k = 0; k < samples_per_row; ++k) counts(i, hit[k]) += 1.0;
  }
  return counts / static_cast<double>(samples_per_row);
}

}  // namespace wchj

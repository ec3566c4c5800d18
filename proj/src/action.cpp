#include "wchj/action.hpp"

#include "wchj/parallel.hpp"
#include "wchj/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace wchj {

std::vector<long> stratify_counts(const Vector& a, long samples) {
  int m = static_cast<int>(a.size());
  std::vector<long> counts(m, 0);
  std::vector<std::pair<double, int>> fracs;
  long assigned = 0;
  for (int i = 0; i < m; ++i) {
    double want = a[i] * static_cast<double>(samples);
    counts[i] = static_cast<long>(want);
    assigned += counts[i];
    fracs.emplace_back(want - counts[i], i);
  }
  std::sort(fracs.begin(), fracs.end(), [](const auto& l, const auto& r) {
    if (l.first != r.first) return l.first > r.first;
    return l.second < r.second;
  });
  for (long k = 0; k < samples - assigned; ++k) counts[fracs[k % m].second] += 1;
  // every active stratum gets at least one path
  for (int i = 0; i < m; ++i) {
    if (a[i] > 1e-14 && counts[i] == 0) {
      int donor = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      if (counts[donor] > 1) {
        counts[donor] -= 1;
        counts[i] += 1;
      }
    }
  }
  return counts;
}

namespace {

struct PathSample {
  double lagrangian = 0;  // int_0^tau L ds, left-endpoint cells
  double tau = 0;
  int final_mode = 0;
};

// One stratified Monte Carlo pass; stream k drives path k whatever the thread
// count. extra(k, sample) runs after each path for callers that need more
// than the integrals.
template <class Extra>
void run_paths(const LagrangianTable& table, const CouplingMatrix& lambda, const Vector& x,
               const ControlPolicy& policy, const StoppingRule& rule, int start_mode,
               long stream_lo, long count, std::uint64_t seed, double dt_curve, int threads,
               std::vector<PathSample>& out, long out_offset, Extra&& extra) {
  const int dim = table.grid().dim;
  const double horizon = rule.cap() + 1.0;
  Vector e = Vector::Zero(lambda.modes());
  e[start_mode] = 1.0;
  parallel_for(static_cast<std::size_t>(count), threads, [&](std::size_t lo, std::size_t hi) {
    double pos[2] = {0, 0};
    double negq[2] = {0, 0};
    for (std::size_t k = lo; k < hi; ++k) {
      RngStream rng(seed, static_cast<std::uint64_t>(stream_lo + k));
      IndexPath omega = sample_index_path(lambda, e, horizon, rng);
      double tau = rule.evaluate(omega);
      double acc = 0.0;
      walk_control_cells(policy, omega, tau, dt_curve,
                         [&](double, int mode, const double* disp, const double* q, double len) {
                           for (int a2 = 0; a2 < dim; ++a2) {
                             pos[a2] = x[a2] + disp[a2];
                             negq[a2] = -q[a2];
                           }
                           acc += len * table.value(mode, pos, negq);
                         });
      PathSample s;
      s.lagrangian = acc;
      s.tau = tau;
      s.final_mode = omega.at(tau);
      out[out_offset + k] = s;
      extra(out_offset + k, omega);
    }
  });
}

struct Moments {
  double mean = 0, sd = 0;
};

Moments moments(const std::vector<double>& v, long lo, long n) {
  Moments m;
  if (n <= 0) return m;
  double s = 0;
  for (long k = 0; k < n; ++k) s += v[lo + k];
  m.mean = s / n;
  if (n > 1) {
    double ss = 0;
    for (long k = 0; k < n; ++k) {
      double d = v[lo + k] - m.mean;
      ss += d * d;
    }
    m.sd = std::sqrt(ss / (n - 1));
  }
  return m;
}

}  // namespace

ActionEstimate action_mc(const LagrangianTable& table, const CouplingMatrix& lambda,
                         const Vector& x, const ControlPolicy& policy, const StoppingRule& rule,
                         const Vector& a, double alpha, long samples, std::uint64_t seed,
                         double dt_curve, int threads) {
  if (policy.bound() > table.q_max() + 1e-12)
    throw std::domain_error("policy bound exceeds the Lagrangian table velocity box");
  if (!is_probability_vector(a)) throw std::invalid_argument("initial law is not a probability vector");
  int m = lambda.modes();
  std::vector<long> counts = stratify_counts(a, samples);
  long total = std::accumulate(counts.begin(), counts.end(), 0L);
  std::vector<PathSample> paths(total);

  ActionEstimate est;
  est.alpha = alpha;
  est.samples = total;
  double var = 0;
  long offset = 0;
  for (int i = 0; i < m; ++i) {
    if (counts[i] == 0) {
      if (a[i] > 1e-14) throw std::invalid_argument("not enough samples for the initial law");
      continue;
    }
    run_paths(table, lambda, x, policy, rule, i, offset, counts[i], seed, dt_curve, threads,
              paths, offset, [](long, const IndexPath&) {});
    std::vector<double> vals(counts[i]), taus(counts[i]);
    for (long k = 0; k < counts[i]; ++k) {
      vals[k] = paths[offset + k].lagrangian + alpha * paths[offset + k].tau;
      taus[k] = paths[offset + k].tau;
    }
    Moments mv = moments(vals, 0, counts[i]);
    Moments mt = moments(taus, 0, counts[i]);
    ActionEstimate::ModeSlice slice;
    slice.mode = i;
    slice.weight = a[i];
    slice.mean = mv.mean;
    slice.std_error = counts[i] > 1 ? mv.sd / std::sqrt(static_cast<double>(counts[i])) : 0.0;
    slice.mean_tau = mt.mean;
    slice.samples = counts[i];
    est.breakdown.push_back(slice);
    est.mean += a[i] * mv.mean;
    est.mean_tau += a[i] * mt.mean;
    var += a[i] * a[i] * slice.std_error * slice.std_error;
    offset += counts[i];
  }
  est.std_error = std::sqrt(var);
  return est;
}

ExactAction action_exact_simple(const LagrangianTable& table, const CouplingMatrix& lambda,
                                const Vector& x, const StagedControlSpec& control,
                                const SimpleRuleSpec& rule, const Vector& a, double alpha) {
  if (rule.times.empty() || control.times != rule.times)
    throw std::invalid_argument(
        "exact evaluation needs the control levels to match the rule's observation times");
  if (!is_probability_vector(a)) throw std::invalid_argument("initial law is not a probability vector");
  int m = lambda.modes();
  int dim = table.grid().dim;
  int levels = static_cast<int>(rule.times.size());
  for (const auto& v : control.velocity)
    if (v.rows() != m || v.cols() != dim)
      throw std::invalid_argument("staged control block has wrong shape");
  std::vector<std::vector<bool>> stop_sets = rule.stop_sets;
  stop_sets.back().assign(stop_sets.back().size(), true);

  // A surviving atom is a thin-cylinder history (modes at 0, t_1, .., t_{j-1})
  // that has not stopped yet, carrying its probability and its displacement.
  struct Atom {
    double prob;
    int mode;          // mode at the last observation time
    double disp[2];
  };
  std::vector<Atom> atoms;
  for (int i = 0; i < m; ++i)
    if (a[i] > 0) atoms.push_back(Atom{a[i], i, {0, 0}});

  ExactAction out;
  out.alpha = alpha;
  double t_prev = 0.0;
  for (int j = 0; j < levels; ++j) {
    double t_j = rule.times[j];
    double seg = t_j - t_prev;
    double prob_f = 0;
    for (const auto& atom : atoms) prob_f += atom.prob;
    out.expected_tau += seg * prob_f;

    Matrix step = semigroup(lambda, seg);
    for (const auto& atom : atoms) {
      // integrand: sum_k P(atom) (e^{-(s-t_prev)L})_{atom.mode, k} L_k(x + disp(s), -q)
      double q[2] = {0, 0};
      for (int a2 = 0; a2 < dim; ++a2) q[a2] = control.velocity[j](atom.mode, a2);
      auto f = [&](double s) {
        Matrix es = semigroup(lambda, s);
        double pos[2] = {0, 0}, negq[2] = {0, 0};
        for (int a2 = 0; a2 < dim; ++a2) {
          pos[a2] = x[a2] + atom.disp[a2] + s * q[a2];
          negq[a2] = -q[a2];
        }
        double v = 0;
        for (int k = 0; k < m; ++k) v += es(atom.mode, k) * table.value(k, pos, negq);
        return v;
      };
      out.lagrangian_part += atom.prob * adaptive_simpson(f, 0.0, seg, 1e-9);
    }

    // branch at t_j and drop the stopped mass
    std::vector<Atom> next;
    for (const auto& atom : atoms) {
      double q[2] = {0, 0};
      for (int a2 = 0; a2 < dim; ++a2) q[a2] = control.velocity[j](atom.mode, a2);
      for (int k = 0; k < m; ++k) {
        double p = atom.prob * step(atom.mode, k);
        if (p <= 0) continue;
        if (stop_sets[j][k]) continue;  // stopped at t_j in mode k
        Atom child;
        child.prob = p;
        child.mode = k;
        child.disp[0] = atom.disp[0] + seg * q[0];
        child.disp[1] = dim == 2 ? atom.disp[1] + seg * q[1] : 0.0;
        next.push_back(child);
      }
    }
    atoms = std::move(next);
    t_prev = t_j;
  }
  out.value = out.lagrangian_part + alpha * out.expected_tau;
  return out;
}

MarginEstimate subsolution_estimate_margin(const VectorField& u, const LagrangianTable& table,
                                           const CouplingMatrix& lambda, const Vector& x,
                                           const Vector& y, const ControlPolicy& policy,
                                           const StoppingRule& rule, const Vector& a, double alpha,
                                           long samples, std::uint64_t seed, double dt_curve,
                                           double cycle_tol, int threads) {
  int m = lambda.modes();
  int dim = table.grid().dim;
  Vector target(dim);
  for (int c = 0; c < dim; ++c) target[c] = wrap01(y[c] - x[c]);
  CycleCheck cyc = check_cycle(policy, rule, target, lambda, a, dt_curve, cycle_tol,
                               std::min<long>(samples, 2000), seed ^ 0x5bd1e995u, threads);
  if (cyc.violation_fraction > 0) {
    std::ostringstream msg;
    msg << "control is not a cycle for displacement y - x: violation fraction "
        << cyc.violation_fraction << " at tolerance " << cyc.tolerance;
    throw std::domain_error(msg.str());
  }

  Vector u_at_x(m), u_at_y(m);
  for (int i = 0; i < m; ++i) {
    u_at_x[i] = u.value(i, x);
    u_at_y[i] = u.value(i, y);
  }

  std::vector<long> counts = stratify_counts(a, samples);
  long total = std::accumulate(counts.begin(), counts.end(), 0L);
  std::vector<PathSample> paths(total);

  MarginEstimate est;
  est.cycle_violation = cyc.violation_fraction;
  est.samples = total;
  double var = 0;
  long offset = 0;
  for (int i = 0; i < m; ++i) {
    if (counts[i] == 0) continue;
    run_paths(table, lambda, x, policy, rule, i, offset, counts[i], seed, dt_curve, threads,
              paths, offset, [](long, const IndexPath&) {});
    std::vector<double> margins(counts[i]), actions(counts[i]), lhs(counts[i]);
    for (long k = 0; k < counts[i]; ++k) {
      const PathSample& s = paths[offset + k];
      double act = s.lagrangian + alpha * s.tau;
      double left = u_at_x[i] - u_at_y[s.final_mode];
      actions[k] = act;
      lhs[k] = left;
      margins[k] = act - left;
    }
    Moments mm = moments(margins, 0, counts[i]);
    Moments ma = moments(actions, 0, counts[i]);
    Moments ml = moments(lhs, 0, counts[i]);
    est.margin += a[i] * mm.mean;
    est.action_mean += a[i] * ma.mean;
    est.lhs_mean += a[i] * ml.mean;
    double se = counts[i] > 1 ? mm.sd / std::sqrt(static_cast<double>(counts[i])) : 0.0;
    var += a[i] * a[i] * se * se;
    offset += counts[i];
  }
  est.std_error = std::sqrt(var);
  return est;
}

}  // namespace wchj

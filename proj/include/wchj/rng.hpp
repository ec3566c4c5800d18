#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace wchj {

// Per-stream deterministic RNG. Stream k of a run yields the same draws no
// matter how work is scheduled across threads, so every Monte Carlo result
// depends only on (seed, stream index). Variate transforms are hand-rolled on
// top of mt19937_64 because the standard distributions are not pinned down by
// the standard.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream) : engine_(mix(seed, stream)) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform on [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Exponential holding time; rate <= 0 means "never".
  double exponential(double rate) {
    if (rate <= 0.0) return std::numeric_limits<double>::infinity();
    double t = 0.0;
    do {
      t = -std::log1p(-uniform()) / rate;
    } while (t <= 0.0);
    return t;
  }

  // Draw an index from nonnegative weights summing to ~1 (CDF scan).
  int discrete(const Eigen::VectorXd& w) {
    double u = uniform();
    double acc = 0.0;
    for (Eigen::Index i = 0; i + 1 < w.size(); ++i) {
      acc += w[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(w.size() - 1);
  }

 private:
  static std::uint64_t splitmix(std::uint64_t& s) {
    s += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed;
    std::uint64_t a = splitmix(s);
    s ^= 0x6a09e667f3bcc909ull + stream * 0xd1342543de82ef95ull;
    std::uint64_t b = splitmix(s);
    return a ^ b;
  }

  std::mt19937_64 engine_;
};

}  // namespace wchj

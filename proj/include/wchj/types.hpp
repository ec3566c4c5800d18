#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace wchj {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Points on the torus live in [0,1) per axis; all torus arithmetic is mod 1.
inline double wrap01(double x) {
  double y = x - std::floor(x);
  return y < 1.0 ? y : 0.0;
}

inline Vector wrap01(const Vector& x) {
  Vector y(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = wrap01(x[i]);
  return y;
}

// Signed representative of a-b in (-1/2, 1/2].
inline double torus_delta(double a, double b) {
  double d = wrap01(a - b);
  return d > 0.5 ? d - 1.0 : d;
}

inline double torus_distance(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    double d = torus_delta(a[i], b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

inline double torus_distance_raw(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int i = 0; i < dim; ++i) {
    double d = torus_delta(a[i], b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace wchj

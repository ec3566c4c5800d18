#include "wchj/coupling.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace wchj {

namespace {

constexpr double kRowSumTol = 1e-12;
constexpr double kEdgeTol = 1e-14;  // threshold for "nonzero entry" in the edge pattern

// Strong connectivity of the directed graph i -> j iff |lambda_ij| > tol,
// i != j. Returns an index set with no outgoing edge when reducible.
std::vector<int> find_blocking_set(const Matrix& lambda) {
  int m = static_cast<int>(lambda.rows());
  if (m == 1) return {};
  auto reach_from = [&](int start, bool transpose) {
    std::vector<char> seen(m, 0);
    std::vector<int> stack{start};
    seen[start] = 1;
    while (!stack.empty()) {
      int i = stack.back();
      stack.pop_back();
      for (int j = 0; j < m; ++j) {
        if (j == i || seen[j]) continue;
        double e = transpose ? lambda(j, i) : lambda(i, j);
        if (std::abs(e) > kEdgeTol) {
          seen[j] = 1;
          stack.push_back(j);
        }
      }
    }
    return seen;
  };
  std::vector<char> fwd = reach_from(0, false);
  std::vector<char> bwd = reach_from(0, true);
  // Nodes that cannot reach node 0 have no edge leaving their set (such an
  // edge would connect them to 0). If instead some node is unreachable from 0,
  // the reachable set itself has no outgoing edge.
  std::vector<int> not_bwd, fwd_set;
  bool all_fwd = true;
  for (int i = 0; i < m; ++i) {
    if (!bwd[i]) not_bwd.push_back(i);
    if (fwd[i]) fwd_set.push_back(i);
    else all_fwd = false;
  }
  if (!not_bwd.empty()) return not_bwd;
  if (!all_fwd) return fwd_set;
  return {};
}

}  // namespace

CouplingValidation validate_coupling(const Matrix& lambda) {
  if (lambda.rows() != lambda.cols() || lambda.rows() < 1)
    throw std::invalid_argument("coupling matrix must be square with M >= 1");
  int m = static_cast<int>(lambda.rows());
  CouplingValidation rep;
  rep.offdiag_nonpositive = true;
  rep.rows_sum_zero = true;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i != j && lambda(i, j) > 0.0) {
        rep.offdiag_nonpositive = false;
        rep.bad_offdiag.emplace_back(i, j);
      }
    }
    if (std::abs(lambda.row(i).sum()) > kRowSumTol) {
      rep.rows_sum_zero = false;
      rep.bad_rows.push_back(i);
    }
  }
  rep.blocking_set = find_blocking_set(lambda);
  rep.irreducible = rep.blocking_set.empty();
  return rep;
}

CouplingMatrix::CouplingMatrix(Matrix lambda) : lambda_(std::move(lambda)) {
  CouplingValidation rep = validate_coupling(lambda_);
  if (!rep.pass()) {
    std::ostringstream msg;
    msg << "invalid coupling matrix:";
    if (!rep.offdiag_nonpositive) msg << " positive off-diagonal entry;";
    if (!rep.rows_sum_zero) msg << " nonzero row sum;";
    if (!rep.irreducible) msg << " reducible pattern;";
    throw std::invalid_argument(msg.str());
  }
}

bool is_stochastic(const Matrix& m, double entry_tol, double row_tol) {
  if (m.rows() != m.cols() || m.rows() < 1) return false;
  if (m.minCoeff() < -entry_tol) return false;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (std::abs(m.row(i).sum() - 1.0) > row_tol) return false;
  return true;
}

bool is_probability_vector(const Vector& a, double tol) {
  if (a.size() < 1) return false;
  if (a.minCoeff() < -tol) return false;
  return std::abs(a.sum() - 1.0) <= tol;
}

Matrix semigroup(const CouplingMatrix& lambda, double t) {
  if (t < 0.0) throw std::domain_error("semigroup requires t >= 0");
  int m = lambda.modes();
  if (t == 0.0) return Matrix::Identity(m, m);
  Matrix e = (-t * lambda.entries()).exp();
  // Entries are nonnegative up to rounding; clamp and renormalize rows so the
  // result is stochastic to the last ulp.
  e = e.cwiseMax(0.0);
  for (int i = 0; i < m; ++i) {
    double s = e.row(i).sum();
    if (s <= 0.0) throw std::runtime_error("matrix exponential produced a zero row");
    e.row(i) /= s;
  }
  return e;
}

Vector stationary_distribution(const CouplingMatrix& lambda) {
  int m = lambda.modes();
  // pi Lambda = 0 and sum(pi) = 1 as a stacked least-squares system.
  Matrix a(m + 1, m);
  a.topRows(m) = lambda.entries().transpose();
  a.bottomRows(1).setOnes();
  Vector rhs = Vector::Zero(m + 1);
  rhs[m] = 1.0;
  Vector pi = a.colPivHouseholderQr().solve(rhs);
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();
  double residual = (pi.transpose() * lambda.entries()).cwiseAbs().maxCoeff();
  if (residual > 1e-10) {
    std::ostringstream msg;
    msg << "stationary distribution did not converge, residual " << residual;
    throw std::runtime_error(msg.str());
  }
  return pi;
}

KerImSplit split_ker_im(const CouplingMatrix& lambda, const Vector& a) {
  int m = lambda.modes();
  if (a.size() != m) throw std::invalid_argument("split_ker_im: size mismatch");
  KerImSplit out;
  if (m == 1) {
    out.alpha = a[0];
    out.a2 = Vector::Zero(1);
    out.b = Vector::Zero(1);
    return out;
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(lambda.entries());
  if (cod.rank() < m - 1) throw std::domain_error("split_ker_im: rank below M-1");
  // The image of Lambda is orthogonal to the left kernel, spanned by the
  // stationary vector, so alpha = pi . a.
  Vector pi = stationary_distribution(lambda);
  out.alpha = pi.dot(a);
  out.a2 = a - out.alpha * Vector::Ones(m);
  Vector b = cod.solve(-out.a2);
  b.array() -= b.mean();
  double residual = (lambda.entries() * b + out.a2).cwiseAbs().maxCoeff();
  if (residual > 1e-9) {
    std::ostringstream msg;
    msg << "split_ker_im: Lambda b = -a2 unsolvable, residual " << residual;
    throw std::domain_error(msg.str());
  }
  out.b = b;
  return out;
}

}  // namespace wchj

#pragma once

#include "wchj/types.hpp"

#include <utility>
#include <vector>

namespace wchj {

// Outcome of the structural checks on a coupling matrix: nonpositive
// off-diagonal entries, zero row sums, and irreducibility of the off-diagonal
// sparsity pattern (vacuous for a single mode).
struct CouplingValidation {
  bool offdiag_nonpositive = false;
  bool rows_sum_zero = false;
  bool irreducible = false;
  std::vector<std::pair<int, int>> bad_offdiag;  // entries > 0 off the diagonal
  std::vector<int> bad_rows;                     // rows whose sum exceeds tolerance
  std::vector<int> blocking_set;                 // index set with no outgoing edge
  bool pass() const { return offdiag_nonpositive && rows_sum_zero && irreducible; }
};

CouplingValidation validate_coupling(const Matrix& lambda);

// A validated coupling matrix. -entries() generates a stochastic semigroup;
// rows sum to zero, off-diagonal entries are nonpositive, and the nonzero
// pattern is strongly connected (so the rank is exactly M-1 for M > 1).
class CouplingMatrix {
 public:
  explicit CouplingMatrix(Matrix lambda);

  int modes() const { return static_cast<int>(lambda_.rows()); }
  const Matrix& entries() const { return lambda_; }
  double rate(int i) const { return lambda_(i, i); }
  double max_rate() const { return lambda_.diagonal().maxCoeff(); }
  double inf_norm() const { return lambda_.cwiseAbs().rowwise().sum().maxCoeff(); }

 private:
  Matrix lambda_;
};

bool is_stochastic(const Matrix& m, double entry_tol = 1e-12, double row_tol = 1e-10);
bool is_probability_vector(const Vector& a, double tol = 1e-12);

// e^{-t Lambda}. Rows are renormalized to sum to exactly 1 so that constant
// vectors are exact fixed points of the induced averaging.
Matrix semigroup(const CouplingMatrix& lambda, double t);

// pi with pi Lambda = 0, components summing to 1; strictly positive under
// irreducibility.
Vector stationary_distribution(const CouplingMatrix& lambda);

// a = alpha*1 + a2 with a2 in the image of Lambda, and Lambda b = -a2.
// b is returned mean-zero (it is unique up to multiples of 1).
struct KerImSplit {
  double alpha = 0;
  Vector a2;
  Vector b;
};

KerImSplit split_ker_im(const CouplingMatrix& lambda, const Vector& a);

}  // namespace wchj

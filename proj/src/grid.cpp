#include "wchj/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace wchj {

TorusGrid::TorusGrid(int dim_, int n_) : dim(dim_), n(n_) {
  if (dim != 1 && dim != 2) throw std::invalid_argument("grid dimension must be 1 or 2");
  if (n < 8) throw std::invalid_argument("grid needs at least 8 points per axis");
}

long TorusGrid::nearest_node(const double* x) const {
  int ix = wrap(static_cast<int>(std::lround(wrap01(x[0]) * n)));
  if (dim == 1) return ix;
  int iy = wrap(static_cast<int>(std::lround(wrap01(x[1]) * n)));
  return index(ix, iy);
}

double interp_periodic(const TorusGrid& grid, const double* f, const double* x) {
  int n = grid.n;
  double ux = wrap01(x[0]) * n;
  int ix = static_cast<int>(ux);
  if (ix >= n) ix = n - 1;  // guards wrap01 rounding up against n
  double wx = ux - ix;
  int ix1 = ix + 1 == n ? 0 : ix + 1;
  if (grid.dim == 1) return (1.0 - wx) * f[ix] + wx * f[ix1];

  double uy = wrap01(x[1]) * n;
  int iy = static_cast<int>(uy);
  if (iy >= n) iy = n - 1;
  double wy = uy - iy;
  int iy1 = iy + 1 == n ? 0 : iy + 1;
  long r0 = static_cast<long>(n) * iy, r1 = static_cast<long>(n) * iy1;
  double v0 = (1.0 - wx) * f[r0 + ix] + wx * f[r0 + ix1];
  double v1 = (1.0 - wx) * f[r1 + ix] + wx * f[r1 + ix1];
  return (1.0 - wy) * v0 + wy * v1;
}

VectorField VectorField::constant(const TorusGrid& g, const Vector& b) {
  VectorField out(g, static_cast<int>(b.size()));
  for (int i = 0; i < out.modes(); ++i) out.values.col(i).setConstant(b[i]);
  return out;
}

}  // namespace wchj

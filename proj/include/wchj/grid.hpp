#pragma once

#include "wchj/types.hpp"

namespace wchj {

// Uniform periodic grid on the torus, 1 or 2 axes, spacing 1/n. Node layout
// is row major: node = ix + n*iy.
struct TorusGrid {
  int dim = 1;
  int n = 64;

  TorusGrid() = default;
  TorusGrid(int dim_, int n_);

  double h() const { return 1.0 / n; }
  long num_nodes() const { return dim == 1 ? n : static_cast<long>(n) * n; }

  int wrap(int i) const {
    i %= n;
    return i < 0 ? i + n : i;
  }

  long index(int ix, int iy = 0) const {
    return dim == 1 ? wrap(ix) : wrap(ix) + static_cast<long>(n) * wrap(iy);
  }

  void coords(long node, int* ix, int* iy) const {
    *ix = static_cast<int>(node % n);
    *iy = dim == 1 ? 0 : static_cast<int>(node / n);
  }

  void point_raw(long node, double* out) const {
    int ix, iy;
    coords(node, &ix, &iy);
    out[0] = ix * h();
    if (dim == 2) out[1] = iy * h();
  }

  Vector point(long node) const {
    Vector x(dim);
    point_raw(node, x.data());
    return x;
  }

  long nearest_node(const double* x) const;
  long nearest_node(const Vector& x) const { return nearest_node(x.data()); }

  bool operator==(const TorusGrid&) const = default;
};

// Periodic multilinear interpolation of per-node values; x may be any real
// vector, wrapping is applied per axis.
double interp_periodic(const TorusGrid& grid, const double* node_values, const double* x);

// One real value per grid node and mode; column i holds component i.
struct VectorField {
  TorusGrid grid;
  Matrix values;  // (num_nodes, modes)

  VectorField() = default;
  VectorField(const TorusGrid& g, int modes) : grid(g), values(Matrix::Zero(g.num_nodes(), modes)) {}

  int modes() const { return static_cast<int>(values.cols()); }

  double value(int mode, const double* x) const {
    return interp_periodic(grid, values.col(mode).data(), x);
  }
  double value(int mode, const Vector& x) const { return value(mode, x.data()); }

  Vector at_node(long node) const { return values.row(node).transpose(); }

  static VectorField constant(const TorusGrid& g, const Vector& b);
};

}  // namespace wchj

#include "coalmpc/geometry.hpp"

#include <stdexcept>

namespace coalmpc {

SymBox::SymBox(Vector h) : halfwidths(std::move(h)) {
  if ((halfwidths.array() < 0.0).any()) {
    throw std::invalid_argument("SymBox: halfwidths must be non-negative.");
  }
}

Zonotope::Zonotope(int dim, Matrix G) : dimension(dim), generators(std::move(G)) {
  if (dim < 0) {
    throw std::invalid_argument("Zonotope: dimension must be non-negative.");
  }
  if (generators.size() == 0) {
    generators.resize(dimension, 0);
  }
  if (generators.rows() != dimension) {
    throw std::invalid_argument("Zonotope: generator length must equal dimension.");
  }
}

Zonotope Zonotope::origin(int dim) { return Zonotope(dim, Matrix::Zero(dim, 0)); }

Zonotope Zonotope::from_box(const SymBox& box) {
  const int n = box.dim();
  Matrix G = Matrix::Zero(n, n);
  G.diagonal() = box.halfwidths;
  return Zonotope(n, std::move(G));
}

double support(const Zonotope& Z, const Vector& d) {
  if (d.size() != Z.dimension) {
    throw std::invalid_argument("support: direction dimension mismatch.");
  }
  return (Z.generators.transpose() * d).cwiseAbs().sum();
}

Zonotope linear_image(const Matrix& A, const Zonotope& Z) {
  if (A.cols() != Z.dimension) {
    throw std::invalid_argument("linear_image: matrix column count must equal set dimension.");
  }
  return Zonotope(static_cast<int>(A.rows()), A * Z.generators);
}

Zonotope minkowski_sum(const Zonotope& Z1, const Zonotope& Z2) {
  if (Z1.dimension != Z2.dimension) {
    throw std::invalid_argument("minkowski_sum: dimensions must match.");
  }
  Matrix G(Z1.dimension, Z1.num_generators() + Z2.num_generators());
  G << Z1.generators, Z2.generators;
  return Zonotope(Z1.dimension, std::move(G));
}

bool contained_in_scaled_box(const Zonotope& Z, const SymBox& B, double s) {
  if (Z.dimension != B.dim()) {
    throw std::invalid_argument("contained_in_scaled_box: dimensions must match.");
  }
  if (s < 0.0 || s > 1.0) {
    throw std::invalid_argument("contained_in_scaled_box: scale must lie in [0,1].");
  }
  // Axis supports are the row-wise absolute sums of the generator matrix.
  const Vector axis_support = Z.generators.cwiseAbs().rowwise().sum();
  return (axis_support.array() <= s * B.halfwidths.array()).all();
}

}  // namespace coalmpc

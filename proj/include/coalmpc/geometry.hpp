#pragma once

// Symmetric convex sets (axis-aligned boxes and origin-centered zonotopes)
// with support-function arithmetic. All set inclusions used by the
// invariance design reduce to closed-form support evaluations on these types.

#include <Eigen/Dense>

namespace coalmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// {x : |x_i| <= h_i}. A proper C-set iff every halfwidth is positive.
struct SymBox {
  Vector halfwidths;

  SymBox() = default;
  explicit SymBox(Vector h);

  int dim() const { return static_cast<int>(halfwidths.size()); }
};

// {sum_j lambda_j g_j : |lambda_j| <= 1}, generators as columns of G.
// Always symmetric about the origin; G may have zero columns (the set {0}).
struct Zonotope {
  int dimension = 0;
  Matrix generators;  // dimension x k, k >= 0

  Zonotope() = default;
  Zonotope(int dim, Matrix G);

  static Zonotope origin(int dim);
  static Zonotope from_box(const SymBox& box);

  int num_generators() const { return static_cast<int>(generators.cols()); }
};

// h_Z(d) = sum_j |d . g_j|, exact.
double support(const Zonotope& Z, const Vector& d);

// Image {A z : z in Z}; generators map column-wise.
Zonotope linear_image(const Matrix& A, const Zonotope& Z);

// Generator concatenation; support is additive in every direction.
Zonotope minkowski_sum(const Zonotope& Z1, const Zonotope& Z2);

// True iff support(Z, e_i) <= s * h_i on every axis; boundary counts as
// contained (the boxes are closed).
bool contained_in_scaled_box(const Zonotope& Z, const SymBox& B, double s);

}  // namespace coalmpc

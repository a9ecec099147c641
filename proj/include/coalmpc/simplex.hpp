#pragma once

// Dense linear programming backend. Problems are given in computational
// standard form: min c'x subject to A x = b and elementwise bounds
// lower <= x <= upper (entries may be +/-infinity). Callers encode
// inequality rows by appending slack variables.
//
// Backend contract: on Optimal, the primal residual ||Ax - b||_inf is at
// most 1e-9 * (1 + ||b||_inf) and the reported objective is accurate to
// the same order. Infeasibility and unboundedness are certified outcomes,
// not timeouts.

#include <Eigen/Dense>
#include <memory>

namespace coalmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct LpProblem {
  Vector c;
  Matrix A;  // m x n; m may be 0
  Vector b;
  Vector lower;
  Vector upper;

  int num_vars() const { return static_cast<int>(c.size()); }
  int num_rows() const { return static_cast<int>(A.rows()); }
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  Vector x;
  double objective = 0.0;
};

class LpBackend {
 public:
  virtual ~LpBackend() = default;
  virtual LpResult solve(const LpProblem& problem) const = 0;
};

// Two-phase primal simplex on bounded variables with a Bland's-rule
// fallback for anti-cycling. Dense; intended for the small problems
// produced by the invariance design (at most a few hundred variables).
class DenseSimplexLp final : public LpBackend {
 public:
  LpResult solve(const LpProblem& problem) const override;
};

// The process-wide default backend used by the design routines.
const LpBackend& default_lp_backend();

}  // namespace coalmpc

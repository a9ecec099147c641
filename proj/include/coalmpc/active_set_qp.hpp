#pragma once

// Dense strictly convex quadratic programming backend:
//
//   min 0.5 z'Hz + g'z   s.t.   E z = be,  C z <= d
//
// with H symmetric positive definite. The horizon optimizations in this
// library always regularize through the input cost, so strict convexity is
// a precondition, not a limitation.
//
// Backend contract: on Optimal, the stationarity and constraint residuals
// reported in kkt_residual are at most 1e-8 on well-scaled data.
// Infeasibility is certified by an unbounded dual ray, never by iteration
// limits.

#include <Eigen/Dense>

#include "coalmpc/simplex.hpp"  // Matrix/Vector aliases

namespace coalmpc {

struct QpProblem {
  Matrix H;  // n x n, symmetric positive definite
  Vector g;
  Matrix E;  // p x n equality rows; p may be 0
  Vector be;
  Matrix C;  // q x n inequality rows; q may be 0
  Vector d;

  int num_vars() const { return static_cast<int>(g.size()); }
};

enum class QpStatus { Optimal, Infeasible };

struct QpResult {
  QpStatus status = QpStatus::Infeasible;
  Vector z;
  double objective = 0.0;
  double kkt_residual = 0.0;
};

class QpBackend {
 public:
  virtual ~QpBackend() = default;
  virtual QpResult solve(const QpProblem& problem) const = 0;
};

// Goldfarb-Idnani dual active-set method. Starts from the equality
// constrained minimizer and adds the most violated inequality one at a
// time, dropping blockers whose multipliers would turn negative. Every
// intermediate iterate is optimal for its active set, which is what makes
// the dual approach immune to the phase-1 feasibility search a primal
// method would need.
class DualActiveSetQp final : public QpBackend {
 public:
  QpResult solve(const QpProblem& problem) const override;
};

const QpBackend& default_qp_backend();

}  // namespace coalmpc

#include "coalmpc/active_set_qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace coalmpc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kViolationTol = 1e-9;
constexpr double kDropTol = 1e-12;
constexpr double kZeroStepTol = 1e-10;

struct ActiveConstraint {
  int row;        // index into C, or -1 for an equality
  bool equality;  // equalities never leave the active set
  Vector normal;
  Vector hinv_normal;  // H^{-1} * normal, cached for the Schur solves
  double lambda;
};

void validate(const QpProblem& p) {
  const int n = p.num_vars();
  if (p.H.rows() != n || p.H.cols() != n) {
    throw std::invalid_argument("QpProblem: H must be n x n");
  }
  if ((p.H - p.H.transpose()).lpNorm<Eigen::Infinity>() >
      1e-8 * (1.0 + p.H.lpNorm<Eigen::Infinity>())) {
    throw std::invalid_argument("QpProblem: H must be symmetric");
  }
  if (p.E.size() > 0 && p.E.cols() != n) {
    throw std::invalid_argument("QpProblem: E column count must match g");
  }
  if (p.E.rows() != p.be.size()) {
    throw std::invalid_argument("QpProblem: E row count must match be");
  }
  if (p.C.size() > 0 && p.C.cols() != n) {
    throw std::invalid_argument("QpProblem: C column count must match g");
  }
  if (p.C.rows() != p.d.size()) {
    throw std::invalid_argument("QpProblem: C row count must match d");
  }
}

}  // namespace

QpResult DualActiveSetQp::solve(const QpProblem& p) const {
  validate(p);
  const int num_eq = static_cast<int>(p.E.rows());
  const int num_ineq = static_cast<int>(p.C.rows());

  const Matrix H = 0.5 * (p.H + p.H.transpose());
  Eigen::LLT<Matrix> llt(H);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("QpProblem: H must be positive definite");
  }
  const auto hinv = [&](const Vector& v) { return Vector(llt.solve(v)); };

  // Seed the active set with the equalities and move to the equality
  // constrained minimizer. Dependent-but-consistent rows are tolerated via
  // the pivoted solve; inconsistent ones show up as a residual and mean the
  // problem has no feasible point at all.
  std::vector<ActiveConstraint> active;
  active.reserve(static_cast<std::size_t>(num_eq) + 8);
  Vector z = -hinv(p.g);
  if (num_eq > 0) {
    for (int i = 0; i < num_eq; ++i) {
      ActiveConstraint a;
      a.row = -1;
      a.equality = true;
      a.normal = p.E.row(i).transpose();
      a.hinv_normal = hinv(a.normal);
      a.lambda = 0.0;
      active.push_back(std::move(a));
    }
    Matrix S(num_eq, num_eq);
    for (int i = 0; i < num_eq; ++i) {
      for (int j = 0; j < num_eq; ++j) {
        S(i, j) = active[static_cast<std::size_t>(i)].normal.dot(
            active[static_cast<std::size_t>(j)].hinv_normal);
      }
    }
    const Vector rhs = p.E * z - p.be;
    Eigen::FullPivLU<Matrix> lu(S);
    const Vector lam = lu.solve(rhs);
    for (int i = 0; i < num_eq; ++i) {
      active[static_cast<std::size_t>(i)].lambda = lam[i];
      z -= lam[i] * active[static_cast<std::size_t>(i)].hinv_normal;
    }
    const double eq_resid = (p.E * z - p.be).lpNorm<Eigen::Infinity>();
    if (eq_resid > 1e-7 * (1.0 + p.be.lpNorm<Eigen::Infinity>())) {
      QpResult res;
      res.status = QpStatus::Infeasible;
      return res;
    }
  }

  const int iteration_cap = 20 * (num_ineq + num_eq) + 200;
  int iterations = 0;

  while (true) {
    // Most violated inequality, scaled per row.
    int enter = -1;
    double worst = kViolationTol;
    Vector slack;
    if (num_ineq > 0) slack = p.C * z - p.d;
    for (int i = 0; i < num_ineq; ++i) {
      const double v = slack[i] / (1.0 + std::abs(p.d[i]));
      if (v > worst) {
        worst = v;
        enter = i;
      }
    }
    if (enter < 0) break;

    const Vector normal = p.C.row(enter).transpose();
    const Vector v_enter = hinv(normal);
    double pending = 0.0;  // multiplier of the entering constraint so far

    while (true) {
      if (++iterations > iteration_cap) {
        throw std::runtime_error("qp: iteration limit exceeded");
      }
      const int k = static_cast<int>(active.size());

      // Directions for growing the entering multiplier t:
      //   H dz + N' dlam + normal = 0,  N dz = 0
      // via the Schur complement S = N H^{-1} N'.
      Vector dlam(k);
      Vector dz;
      if (k > 0) {
        Matrix S(k, k);
        Vector rhs(k);
        for (int i = 0; i < k; ++i) {
          rhs[i] = -active[static_cast<std::size_t>(i)].normal.dot(v_enter);
          for (int j = 0; j < k; ++j) {
            S(i, j) = active[static_cast<std::size_t>(i)].normal.dot(
                active[static_cast<std::size_t>(j)].hinv_normal);
          }
        }
        dlam = Eigen::FullPivLU<Matrix>(S).solve(rhs);
        dz = -v_enter;
        for (int i = 0; i < k; ++i) {
          dz -= dlam[i] * active[static_cast<std::size_t>(i)].hinv_normal;
        }
      } else {
        dz = -v_enter;
      }

      const bool zero_step =
          dz.lpNorm<Eigen::Infinity>() <= kZeroStepTol * (1.0 + normal.lpNorm<Eigen::Infinity>());

      // Partial step: first active inequality whose multiplier would cross
      // zero as t grows.
      double t1 = kInf;
      int blocker = -1;
      for (int i = 0; i < k; ++i) {
        const auto& a = active[static_cast<std::size_t>(i)];
        if (a.equality || dlam[i] >= -kDropTol) continue;
        const double t = -a.lambda / dlam[i];
        if (t < t1) {
          t1 = t;
          blocker = i;
        }
      }

      if (zero_step && blocker < 0) {
        // The entering normal lies in the span of the active ones and no
        // multiplier blocks: the dual grows without bound, so no feasible
        // point satisfies this constraint together with the active set.
        QpResult res;
        res.status = QpStatus::Infeasible;
        return res;
      }

      double t2 = kInf;
      if (!zero_step) {
        const double curvature = normal.dot(dz);  // equals -dz'Hdz < 0
        t2 = -(normal.dot(z) - p.d[enter]) / curvature;
        t2 = std::max(t2, 0.0);
      }

      const double t = std::min(t1, t2);
      if (!zero_step) z += t * dz;
      for (int i = 0; i < k; ++i) active[static_cast<std::size_t>(i)].lambda += t * dlam[i];
      pending += t;

      if (t2 <= t1) {
        ActiveConstraint a;
        a.row = enter;
        a.equality = false;
        a.normal = normal;
        a.hinv_normal = v_enter;
        a.lambda = pending;
        active.push_back(std::move(a));
        break;
      }
      active.erase(active.begin() + blocker);
    }
  }

  QpResult res;
  res.status = QpStatus::Optimal;
  res.z = z;
  res.objective = 0.5 * z.dot(H * z) + p.g.dot(z);

  Vector stationarity = H * z + p.g;
  double primal = 0.0;
  for (const auto& a : active) stationarity += a.lambda * a.normal;
  if (num_eq > 0) primal = std::max(primal, (p.E * z - p.be).lpNorm<Eigen::Infinity>());
  if (num_ineq > 0) primal = std::max(primal, (p.C * z - p.d).maxCoeff());
  res.kkt_residual =
      std::max({stationarity.lpNorm<Eigen::Infinity>(), primal, 0.0});
  return res;
}

const QpBackend& default_qp_backend() {
  static const DualActiveSetQp backend;
  return backend;
}

}  // namespace coalmpc

#include "coalmpc/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace coalmpc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kReducedCostTol = 1e-9;
constexpr double kPivotTol = 1e-10;
constexpr double kRatioTieTol = 1e-12;

enum class VarState : unsigned char { Basic, AtLower, AtUpper, Free };

// Bounded-variable primal simplex over a fixed column matrix W. The caller
// seeds a basis whose basic values are consistent with W x = b; run() then
// minimizes a given cost vector from that point. Used twice per solve: once
// with the artificial (phase 1) cost and once with the real cost. The basis
// matrix is refactorized every iteration; problems here are small enough
// that simplicity wins over factorization updates.
class BoundedSimplex {
 public:
  BoundedSimplex(Matrix W, Vector b, Vector lower, Vector upper)
      : W_(std::move(W)),
        b_(std::move(b)),
        lower_(std::move(lower)),
        upper_(std::move(upper)),
        m_(static_cast<int>(W_.rows())),
        total_(static_cast<int>(W_.cols())),
        state_(static_cast<std::size_t>(total_), VarState::Free),
        x_(Vector::Zero(total_)) {}

  std::vector<VarState>& state() { return state_; }
  std::vector<int>& basis() { return basis_; }
  Vector& x() { return x_; }
  Vector& lower() { return lower_; }
  Vector& upper() { return upper_; }

  enum class RunStatus { Optimal, Unbounded };

  RunStatus run(const Vector& cost) {
    const int bland_after = 10 * (total_ + m_) + 100;
    const int iteration_cap = 50 * (total_ + m_) + 1000;
    bool bland = false;
    refresh();
    for (int iter = 0; iter < iteration_cap; ++iter) {
      if (iter >= bland_after) bland = true;
      if (iter > 0 && iter % 64 == 0) refresh();
      factorize();

      // Reduced costs d = cost - W' y with B' y = cost_B.
      Vector d;
      if (m_ > 0) {
        Vector cost_b(m_);
        for (int i = 0; i < m_; ++i) cost_b[i] = cost[basis_[i]];
        Vector y = lu_.transpose().solve(cost_b);
        d = cost - W_.transpose() * y;
      } else {
        d = cost;
      }

      // Entering variable: most violated reduced cost (Dantzig), or the
      // lowest eligible index once the anti-cycling fallback is active.
      int enter = -1;
      double best_violation = kReducedCostTol;
      for (int j = 0; j < total_; ++j) {
        double violation = 0.0;
        switch (state_[j]) {
          case VarState::Basic:
            continue;
          case VarState::AtLower:
            violation = -d[j];
            break;
          case VarState::AtUpper:
            violation = d[j];
            break;
          case VarState::Free:
            violation = std::abs(d[j]);
            break;
        }
        if (violation > best_violation) {
          enter = j;
          if (bland) break;
          best_violation = violation;
        }
      }
      if (enter < 0) return RunStatus::Optimal;

      const bool increase = state_[enter] == VarState::AtLower ||
                            (state_[enter] == VarState::Free && d[enter] < 0.0);
      const double sigma = increase ? 1.0 : -1.0;
      Vector w = m_ > 0 ? Vector(lu_.solve(W_.col(enter))) : Vector(0);

      // Ratio test. Moving x_enter by sigma*t changes basic i by -sigma*w_i*t.
      // The entering variable's own opposite bound competes with the basic
      // bounds; ties among basics prefer the larger pivot, or the lowest
      // variable index under the Bland fallback.
      double own_range = kInf;
      if (lower_[enter] > -kInf && upper_[enter] < kInf) {
        own_range = upper_[enter] - lower_[enter];
      }
      double best_t = own_range;
      int leave_pos = -1;
      bool leave_to_upper = false;
      double best_mag = 0.0;
      for (int i = 0; i < m_; ++i) {
        const int bi = basis_[i];
        const double delta = -sigma * w[i];
        double limit = kInf;
        bool to_upper = false;
        if (delta < -kPivotTol && lower_[bi] > -kInf) {
          limit = (x_[bi] - lower_[bi]) / (-delta);
        } else if (delta > kPivotTol && upper_[bi] < kInf) {
          limit = (upper_[bi] - x_[bi]) / delta;
          to_upper = true;
        } else {
          continue;
        }
        limit = std::max(limit, 0.0);
        const bool strictly_better = limit < best_t - kRatioTieTol;
        const bool tie = leave_pos >= 0 && limit <= best_t + kRatioTieTol;
        const bool wins_tie =
            tie && (bland ? bi < basis_[leave_pos] : std::abs(w[i]) > best_mag);
        if (strictly_better || wins_tie) {
          best_t = std::min(best_t, limit);
          leave_pos = i;
          leave_to_upper = to_upper;
          best_mag = std::abs(w[i]);
        }
      }
      if (best_t == kInf) return RunStatus::Unbounded;

      x_[enter] += sigma * best_t;
      for (int i = 0; i < m_; ++i) x_[basis_[i]] -= sigma * w[i] * best_t;

      if (leave_pos < 0) {
        // Bound flip: the entering variable ran into its opposite bound.
        state_[enter] = increase ? VarState::AtUpper : VarState::AtLower;
        x_[enter] = increase ? upper_[enter] : lower_[enter];
      } else {
        const int leave = basis_[leave_pos];
        x_[leave] = leave_to_upper ? upper_[leave] : lower_[leave];
        state_[leave] = leave_to_upper ? VarState::AtUpper : VarState::AtLower;
        basis_[leave_pos] = enter;
        state_[enter] = VarState::Basic;
      }
    }
    throw std::runtime_error("simplex: iteration limit exceeded");
  }

  // Recompute basic values from the nonbasic ones. Limits numerical drift
  // from the incremental pivot updates.
  void refresh() {
    if (m_ == 0) return;
    Vector r = b_;
    for (int j = 0; j < total_; ++j) {
      if (state_[j] != VarState::Basic && x_[j] != 0.0) r -= W_.col(j) * x_[j];
    }
    factorize();
    Vector xb = lu_.solve(r);
    for (int i = 0; i < m_; ++i) x_[basis_[i]] = xb[i];
  }

  double residual() const {
    if (m_ == 0) return 0.0;
    return (W_ * x_ - b_).lpNorm<Eigen::Infinity>();
  }

 private:
  void factorize() {
    if (m_ == 0) return;
    Matrix B(m_, m_);
    for (int i = 0; i < m_; ++i) B.col(i) = W_.col(basis_[i]);
    lu_.compute(B);
  }

  Matrix W_;
  Vector b_;
  Vector lower_, upper_;
  int m_, total_;
  std::vector<int> basis_;
  std::vector<VarState> state_;
  Vector x_;
  Eigen::PartialPivLU<Matrix> lu_;
};

void validate(const LpProblem& p) {
  const int n = p.num_vars();
  if (p.lower.size() != n || p.upper.size() != n) {
    throw std::invalid_argument("LpProblem: bound vectors must match c in size");
  }
  if (p.A.size() > 0 && p.A.cols() != n) {
    throw std::invalid_argument("LpProblem: A column count must match c");
  }
  if (p.A.rows() != p.b.size()) {
    throw std::invalid_argument("LpProblem: A row count must match b");
  }
  for (int j = 0; j < n; ++j) {
    if (p.lower[j] > p.upper[j]) {
      throw std::invalid_argument("LpProblem: crossed bounds");
    }
    if (!std::isfinite(p.c[j])) {
      throw std::invalid_argument("LpProblem: cost must be finite");
    }
  }
}

}  // namespace

LpResult DenseSimplexLp::solve(const LpProblem& p) const {
  validate(p);
  const int n = p.num_vars();
  const int m = p.num_rows();
  const int total = n + m;

  // Columns are the original variables followed by one artificial per row.
  Matrix W = Matrix::Zero(m, total);
  if (m > 0) W.leftCols(n) = p.A;
  Vector lower(total), upper(total);
  lower.head(n) = p.lower;
  upper.head(n) = p.upper;
  lower.tail(m).setZero();
  upper.tail(m).setConstant(kInf);

  // Start originals at a finite bound where one exists, free ones at zero,
  // then absorb the row residual into the artificials.
  Vector x0 = Vector::Zero(n);
  std::vector<VarState> state0(static_cast<std::size_t>(n), VarState::Free);
  for (int j = 0; j < n; ++j) {
    if (p.lower[j] > -kInf) {
      x0[j] = p.lower[j];
      state0[static_cast<std::size_t>(j)] = VarState::AtLower;
    } else if (p.upper[j] < kInf) {
      x0[j] = p.upper[j];
      state0[static_cast<std::size_t>(j)] = VarState::AtUpper;
    }
  }
  Vector r = p.b - (m > 0 ? Vector(p.A * x0) : Vector::Zero(0));
  for (int i = 0; i < m; ++i) W(i, n + i) = r[i] >= 0.0 ? 1.0 : -1.0;

  BoundedSimplex s(std::move(W), p.b, std::move(lower), std::move(upper));
  for (int j = 0; j < n; ++j) {
    s.state()[static_cast<std::size_t>(j)] = state0[static_cast<std::size_t>(j)];
    s.x()[j] = x0[j];
  }
  s.basis().resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    s.basis()[static_cast<std::size_t>(i)] = n + i;
    s.state()[static_cast<std::size_t>(n + i)] = VarState::Basic;
    s.x()[n + i] = std::abs(r[i]);
  }

  // Phase 1: minimize the total artificial mass.
  Vector phase1 = Vector::Zero(total);
  phase1.tail(m).setOnes();
  if (s.run(phase1) == BoundedSimplex::RunStatus::Unbounded) {
    throw std::runtime_error("simplex: phase 1 cannot be unbounded");
  }
  s.refresh();
  double artificial_mass = 0.0;
  for (int i = 0; i < m; ++i) artificial_mass += std::abs(s.x()[n + i]);
  const double feas_tol = 1e-8 * (1.0 + p.b.lpNorm<Eigen::Infinity>());
  if (artificial_mass > feas_tol) {
    LpResult res;
    res.status = LpStatus::Infeasible;
    return res;
  }

  // Pin the artificials at zero for phase 2. Degenerate ones may stay in
  // the basis; the ratio test evicts them the moment they would move.
  for (int i = 0; i < m; ++i) {
    s.lower()[n + i] = 0.0;
    s.upper()[n + i] = 0.0;
    if (s.state()[static_cast<std::size_t>(n + i)] != VarState::Basic) {
      s.state()[static_cast<std::size_t>(n + i)] = VarState::AtLower;
      s.x()[n + i] = 0.0;
    }
  }

  Vector phase2 = Vector::Zero(total);
  phase2.head(n) = p.c;
  const auto status = s.run(phase2);
  if (status == BoundedSimplex::RunStatus::Unbounded) {
    LpResult res;
    res.status = LpStatus::Unbounded;
    res.objective = -kInf;
    return res;
  }
  s.refresh();
  if (s.residual() > 1e-6 * (1.0 + p.b.lpNorm<Eigen::Infinity>())) {
    throw std::runtime_error("simplex: solution failed the residual check");
  }

  LpResult res;
  res.status = LpStatus::Optimal;
  res.x = s.x().head(n);
  res.objective = p.c.dot(res.x);
  return res;
}

const LpBackend& default_lp_backend() {
  static const DenseSimplexLp backend;
  return backend;
}

}  // namespace coalmpc

#include "coalmpc/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace coalmpc {

namespace {

// Containment slack on fixed initial states; matches the feasibility
// boundary convention of the solvers (closed sets, ties feasible).
constexpr double kBoundSlack = 1e-9;
// Box halfwidths below this are degenerate; their rows become equalities
// so the active-set solver never juggles a zero-width inequality pair.
constexpr double kZeroWidth = 1e-12;
// Solver results worse than this are treated as a tolerance breach rather
// than returned as optima.
constexpr double kResidualCeiling = 1e-6;

std::vector<Matrix> matrix_powers(const Matrix& A, int T) {
  std::vector<Matrix> pow{Matrix::Identity(A.rows(), A.cols())};
  pow.reserve(static_cast<std::size_t>(T) + 1);
  for (int k = 1; k <= T; ++k) pow.push_back(A * pow.back());
  return pow;
}

struct Condensed {
  QpProblem qp;
  double constant = 0.0;  // cost contribution of the input-free trajectory
  bool infeasible_at_start = false;
};

// Condense a T-step origin-targeting problem over z = (u(0),...,u(T-1)):
//   x(k) = A^k x0 + sum_{j<k} A^{k-1-j} (B u(j) + w(j))
//   min sum_{k<T} x(k)'Q x(k) + u(k)'R u(k)
//   s.t. |x(k)| <= state_bound (k < T), |u(k)| <= input_bound, x(T) = 0.
// Degenerate bounds become equality rows; w may be null (all zero).
Condensed condense(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                   const Vector& x0, const std::vector<Vector>* w, int T,
                   const Vector& state_bound, const Vector& input_bound) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  const int nz = T * m;

  Condensed out;
  for (int i = 0; i < n; ++i) {
    if (std::abs(x0[i]) > state_bound[i] + kBoundSlack) {
      out.infeasible_at_start = true;
      return out;
    }
  }

  const auto Apow = matrix_powers(A, T);
  std::vector<Matrix> AjB;  // A^j B for j < T
  AjB.reserve(static_cast<std::size_t>(T));
  for (int j = 0; j < T; ++j) AjB.push_back(Apow[static_cast<std::size_t>(j)] * B);

  // Input-free trajectory phi(k) = A^k x0 + disturbance convolution.
  std::vector<Vector> phi(static_cast<std::size_t>(T) + 1);
  phi[0] = x0;
  for (int k = 0; k < T; ++k) {
    Vector next = A * phi[static_cast<std::size_t>(k)];
    if (w != nullptr && k < static_cast<int>(w->size())) next += (*w)[static_cast<std::size_t>(k)];
    phi[static_cast<std::size_t>(k + 1)] = std::move(next);
  }

  // Input-to-state maps G(k) with x(k) = phi(k) + G(k) z.
  std::vector<Matrix> G(static_cast<std::size_t>(T) + 1, Matrix::Zero(n, nz));
  for (int k = 1; k <= T; ++k) {
    Matrix& Gk = G[static_cast<std::size_t>(k)];
    for (int j = 0; j < k; ++j) {
      Gk.block(0, j * m, n, m) = AjB[static_cast<std::size_t>(k - 1 - j)];
    }
  }

  Matrix H = Matrix::Zero(nz, nz);
  Vector g = Vector::Zero(nz);
  double constant = phi[0].dot(Q * phi[0]);
  for (int k = 1; k < T; ++k) {
    const Matrix& Gk = G[static_cast<std::size_t>(k)];
    const Matrix QG = Q * Gk;
    H += Gk.transpose() * QG;
    g += Gk.transpose() * (Q * phi[static_cast<std::size_t>(k)]);
    constant += phi[static_cast<std::size_t>(k)].dot(Q * phi[static_cast<std::size_t>(k)]);
  }
  for (int k = 0; k < T; ++k) H.block(k * m, k * m, m, m) += R;
  out.qp.H = 2.0 * H;
  out.qp.g = 2.0 * g;
  out.constant = constant;

  // Count rows first: terminal equalities plus degenerate boxes.
  int ne = n;
  int ni = 0;
  for (int i = 0; i < n; ++i) {
    if (state_bound[i] < kZeroWidth) ne += T - 1;
    else ni += 2 * (T - 1);
  }
  for (int q = 0; q < m; ++q) {
    if (input_bound[q] < kZeroWidth) ne += T;
    else ni += 2 * T;
  }

  Matrix E = Matrix::Zero(ne, nz);
  Vector be = Vector::Zero(ne);
  Matrix C = Matrix::Zero(ni, nz);
  Vector d = Vector::Zero(ni);

  E.topRows(n) = G[static_cast<std::size_t>(T)];
  be.head(n) = -phi[static_cast<std::size_t>(T)];
  int re = n;
  int ri = 0;
  for (int k = 1; k < T; ++k) {
    const Matrix& Gk = G[static_cast<std::size_t>(k)];
    const Vector& pk = phi[static_cast<std::size_t>(k)];
    for (int i = 0; i < n; ++i) {
      if (state_bound[i] < kZeroWidth) {
        E.row(re) = Gk.row(i);
        be[re++] = -pk[i];
      } else {
        C.row(ri) = Gk.row(i);
        d[ri++] = state_bound[i] - pk[i];
        C.row(ri) = -Gk.row(i);
        d[ri++] = state_bound[i] + pk[i];
      }
    }
  }
  for (int k = 0; k < T; ++k) {
    for (int q = 0; q < m; ++q) {
      const int v = k * m + q;
      if (input_bound[q] < kZeroWidth) {
        E(re, v) = 1.0;
        be[re++] = 0.0;
      } else {
        C(ri, v) = 1.0;
        d[ri++] = input_bound[q];
        C(ri, v) = -1.0;
        d[ri++] = input_bound[q];
      }
    }
  }
  out.qp.E = std::move(E);
  out.qp.be = std::move(be);
  out.qp.C = std::move(C);
  out.qp.d = std::move(d);
  return out;
}

Vector coalition_slice(const SystemModel& sys, const CoalitionModel& coal, const Vector& x) {
  Vector out(coal.state_dim());
  for (std::size_t a = 0; a < coal.members.size(); ++a) {
    const int i = coal.members[a];
    out.segment(coal.member_state_offset[a], sys.state_dim(i)) =
        x.segment(sys.state_offset(i), sys.state_dim(i));
  }
  return out;
}

}  // namespace

DisturbanceSequence DisturbanceSequence::zero(int dimension, int N) {
  if (dimension < 1 || N < 0) {
    throw std::invalid_argument("DisturbanceSequence: need dimension >= 1 and N >= 0");
  }
  DisturbanceSequence seq;
  seq.values.assign(static_cast<std::size_t>(N) + 1, Vector::Zero(dimension));
  return seq;
}

std::optional<PrimarySolution> solve_primary(const CoalitionModel& coal,
                                             const CoalitionDesign& design, const Vector& x_bar,
                                             int N, const QpBackend& qp) {
  const int n = coal.state_dim();
  const int m = coal.input_dim();
  if (N < 1) throw std::invalid_argument("solve_primary: horizon must be >= 1");
  if (x_bar.size() != n || design.model.state_dim() != n) {
    throw std::invalid_argument("solve_primary: state dimension mismatch");
  }

  const Vector sb = design.alpha_x * coal.state_box.halfwidths;
  const Vector ib = design.alpha_u * coal.input_box.halfwidths;
  Condensed c = condense(coal.A, coal.B, coal.Q, coal.R, x_bar, nullptr, N, sb, ib);
  if (c.infeasible_at_start) return std::nullopt;

  const QpResult res = qp.solve(c.qp);
  if (res.status == QpStatus::Infeasible) return std::nullopt;
  if (res.kkt_residual > kResidualCeiling) {
    throw std::runtime_error("solve_primary: solver tolerance breach");
  }

  PrimarySolution sol;
  sol.u_seq.reserve(static_cast<std::size_t>(N));
  sol.x_seq.reserve(static_cast<std::size_t>(N) + 1);
  sol.x_seq.push_back(x_bar);
  for (int k = 0; k < N; ++k) {
    sol.u_seq.push_back(res.z.segment(k * m, m));
    sol.x_seq.push_back(coal.A * sol.x_seq.back() + coal.B * sol.u_seq.back());
  }
  sol.value = std::max(0.0, res.objective + c.constant);
  return sol;
}

std::optional<SecondarySolution> solve_secondary(const CoalitionModel& coal,
                                                 const CoalitionDesign& design,
                                                 const Vector& e_bar,
                                                 const DisturbanceSequence& w_seq, int H,
                                                 const QpBackend& qp) {
  const int n = coal.state_dim();
  const int m = coal.input_dim();
  if (e_bar.size() != n || design.model.state_dim() != n) {
    throw std::invalid_argument("solve_secondary: state dimension mismatch");
  }
  if (w_seq.values.empty()) {
    throw std::invalid_argument("solve_secondary: disturbance sequence is empty");
  }
  for (const Vector& wk : w_seq.values) {
    if (wk.size() != n) {
      throw std::invalid_argument("solve_secondary: disturbance dimension mismatch");
    }
  }
  if (w_seq.values.back().lpNorm<Eigen::Infinity>() > 1e-6) {
    throw std::invalid_argument("solve_secondary: disturbance sequence must end at zero");
  }
  if (H < w_seq.steps() + 1) {
    throw std::invalid_argument("solve_secondary: horizon shorter than the disturbance span");
  }

  const Vector sb = design.beta_x * coal.state_box.halfwidths;
  const Vector ib = design.beta_u * coal.input_box.halfwidths;
  Condensed c = condense(coal.A, coal.B, coal.Q, coal.R, e_bar, &w_seq.values, H, sb, ib);
  if (c.infeasible_at_start) return std::nullopt;

  const QpResult res = qp.solve(c.qp);
  if (res.status == QpStatus::Infeasible) return std::nullopt;
  if (res.kkt_residual > kResidualCeiling) {
    throw std::runtime_error("solve_secondary: solver tolerance breach");
  }

  SecondarySolution sol;
  sol.f_seq.reserve(static_cast<std::size_t>(H));
  sol.e_seq.reserve(static_cast<std::size_t>(H) + 1);
  sol.e_seq.push_back(e_bar);
  for (int k = 0; k < H; ++k) {
    sol.f_seq.push_back(res.z.segment(k * m, m));
    Vector next = coal.A * sol.e_seq.back() + coal.B * sol.f_seq.back();
    if (k < static_cast<int>(w_seq.values.size())) next += w_seq.values[static_cast<std::size_t>(k)];
    sol.e_seq.push_back(std::move(next));
  }
  sol.value = std::max(0.0, res.objective + c.constant);
  return sol;
}

bool is_strongly_feasible(const SystemModel& sys, const PartitionDesign& design,
                          const Vector& x, int N, const QpBackend& qp) {
  if (x.size() != sys.total_state_dim()) {
    throw std::invalid_argument("is_strongly_feasible: state dimension mismatch");
  }
  for (const CoalitionDesign& d : design.coalitions) {
    if (!solve_primary(d.model, d, coalition_slice(sys, d.model, x), N, qp)) return false;
  }
  return true;
}

bool is_feasible_with_margin(const SystemModel& sys, const PartitionDesign& design,
                             const Vector& x, int N, const QpBackend& qp) {
  if (x.size() != sys.total_state_dim()) {
    throw std::invalid_argument("is_feasible_with_margin: state dimension mismatch");
  }
  if (N < 1) throw std::invalid_argument("is_feasible_with_margin: horizon must be >= 1");

  for (const CoalitionDesign& d : design.coalitions) {
    const CoalitionModel& coal = d.model;
    const int n = coal.state_dim();
    const int m = coal.input_dim();
    const int nz = n + N * m;  // initial nominal state is a decision variable
    const Vector xc = coalition_slice(sys, coal, x);
    const Vector margin = (d.beta_x + d.xi_x) * coal.state_box.halfwidths;
    const Vector sb = d.alpha_x * coal.state_box.halfwidths;
    const Vector ib = d.alpha_u * coal.input_box.halfwidths;

    const auto Apow = matrix_powers(coal.A, N);
    std::vector<Matrix> AjB;
    for (int j = 0; j < N; ++j) AjB.push_back(Apow[static_cast<std::size_t>(j)] * coal.B);
    // x(k) = A^k x0 + G(k) z with x0 free; rows below act on [x0; z].
    std::vector<Matrix> maps(static_cast<std::size_t>(N) + 1, Matrix::Zero(n, nz));
    for (int k = 0; k <= N; ++k) {
      Matrix& Mk = maps[static_cast<std::size_t>(k)];
      Mk.leftCols(n) = Apow[static_cast<std::size_t>(k)];
      for (int j = 0; j < k; ++j) {
        Mk.block(0, n + j * m, n, m) = AjB[static_cast<std::size_t>(k - 1 - j)];
      }
    }

    int ne = n;
    int ni = 0;
    for (int i = 0; i < n; ++i) {
      ne += margin[i] < kZeroWidth ? 1 : 0;
      ni += margin[i] < kZeroWidth ? 0 : 2;
      if (sb[i] < kZeroWidth) ne += N;
      else ni += 2 * N;
    }
    for (int q = 0; q < m; ++q) {
      if (ib[q] < kZeroWidth) ne += N;
      else ni += 2 * N;
    }

    QpProblem p;
    p.H = Matrix::Identity(nz, nz) * 2e-4;
    p.H.topLeftCorner(n, n) = 2.0 * Matrix::Identity(n, n);
    p.g = Vector::Zero(nz);
    p.g.head(n) = -2.0 * xc;
    p.E = Matrix::Zero(ne, nz);
    p.be = Vector::Zero(ne);
    p.C = Matrix::Zero(ni, nz);
    p.d = Vector::Zero(ni);

    p.E.topRows(n) = maps[static_cast<std::size_t>(N)];
    int re = n;
    int ri = 0;
    for (int i = 0; i < n; ++i) {
      if (margin[i] < kZeroWidth) {
        p.E(re, i) = 1.0;
        p.be[re++] = xc[i];
      } else {
        p.C(ri, i) = 1.0;
        p.d[ri++] = margin[i] + xc[i];
        p.C(ri, i) = -1.0;
        p.d[ri++] = margin[i] - xc[i];
      }
    }
    for (int k = 0; k < N; ++k) {
      const Matrix& Mk = maps[static_cast<std::size_t>(k)];
      for (int i = 0; i < n; ++i) {
        if (sb[i] < kZeroWidth) {
          p.E.row(re) = Mk.row(i);
          p.be[re++] = 0.0;
        } else {
          p.C.row(ri) = Mk.row(i);
          p.d[ri++] = sb[i];
          p.C.row(ri) = -Mk.row(i);
          p.d[ri++] = sb[i];
        }
      }
    }
    for (int k = 0; k < N; ++k) {
      for (int q = 0; q < m; ++q) {
        const int v = n + k * m + q;
        if (ib[q] < kZeroWidth) {
          p.E(re, v) = 1.0;
          p.be[re++] = 0.0;
        } else {
          p.C(ri, v) = 1.0;
          p.d[ri++] = ib[q];
          p.C(ri, v) = -1.0;
          p.d[ri++] = ib[q];
        }
      }
    }

    const QpResult res = qp.solve(p);
    if (res.status == QpStatus::Infeasible) return false;
    if (res.kkt_residual > kResidualCeiling) {
      throw std::runtime_error("is_feasible_with_margin: solver tolerance breach");
    }
  }
  return true;
}

SymBox one_step_feasible_box(const CoalitionModel& coal, const CoalitionDesign& design,
                             bool with_margin) {
  const int n = coal.state_dim();
  if (coal.input_dim() != n) {
    throw std::invalid_argument("one_step_feasible_box: needs one input per state");
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j && (std::abs(coal.A(i, j)) > kZeroWidth || std::abs(coal.B(i, j)) > kZeroWidth)) {
        throw std::invalid_argument("one_step_feasible_box: needs per-axis decoupled dynamics");
      }
    }
  }

  Vector half(n);
  for (int i = 0; i < n; ++i) {
    const double a = coal.A(i, i);
    const double b = coal.B(i, i);
    const double state_cap = design.alpha_x * coal.state_box.halfwidths[i];
    double cap = state_cap;
    if (std::abs(a) > kZeroWidth) {
      cap = std::min(cap, design.alpha_u * coal.input_box.halfwidths[i] * std::abs(b) / std::abs(a));
    }
    if (with_margin) cap += (design.beta_x + design.xi_x) * coal.state_box.halfwidths[i];
    half[i] = cap;
  }
  return SymBox(half);
}

}  // namespace coalmpc

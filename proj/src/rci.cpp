#include "coalmpc/rci.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace coalmpc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Gathers the design LP's bookkeeping. Variables, in order: the gain
// entries M_l(p, q), the two scalings, one magnitude variable per
// generator term, then one slack per inequality-encoded row. All rows are
// equalities; inequalities carry a nonnegative slack.
struct DesignLayout {
  int h, n, m, g;
  int num_state_abs;  // (h-1) * n * g, the l = 0 terms are constants
  int num_input_abs;  // h * m * g
  int eta, theta, t_base, s_base, slack_base;
  int rows_abs_base, rows_incl_base;
  int num_vars, num_rows;

  DesignLayout(int h_, int n_, int m_, int g_) : h(h_), n(n_), m(m_), g(g_) {
    num_state_abs = (h - 1) * n * g;
    num_input_abs = h * m * g;
    const int num_gains = h * m * n;
    eta = num_gains;
    theta = num_gains + 1;
    t_base = num_gains + 2;
    s_base = t_base + num_state_abs;
    slack_base = s_base + num_input_abs;
    rows_abs_base = n * n;
    rows_incl_base = rows_abs_base + 2 * (num_state_abs + num_input_abs);
    num_rows = rows_incl_base + n + m;
    num_vars = slack_base + (num_rows - rows_abs_base);
  }

  int gain(int l, int p, int q) const { return l * m * n + p * n + q; }
  int t_var(int l, int i, int j) const { return t_base + ((l - 1) * n + i) * g + j; }
  int s_var(int l, int p, int j) const { return s_base + (l * m + p) * g + j; }
  int slack(int row) const { return slack_base + (row - rows_abs_base); }
};

}  // namespace

std::vector<Matrix> d_matrices(const Matrix& A, const Matrix& B,
                               const std::vector<Matrix>& M) {
  const int n = static_cast<int>(A.rows());
  const int h = static_cast<int>(M.size());
  if (A.cols() != n || B.rows() != n) {
    throw std::invalid_argument("d_matrices: dimension mismatch");
  }
  for (const auto& Ml : M) {
    if (Ml.rows() != B.cols() || Ml.cols() != n) {
      throw std::invalid_argument("d_matrices: gain dimensions must be m x n");
    }
  }
  std::vector<Matrix> D;
  D.reserve(static_cast<std::size_t>(h) + 1);
  D.push_back(Matrix::Identity(n, n));
  for (int l = 1; l <= h; ++l) {
    // D_{l} = A D_{l-1} + B M_{l-1}; closed form A^l + sum A^{l-1-j} B M_j.
    D.push_back(A * D.back() + B * M[static_cast<std::size_t>(l - 1)]);
  }
  return D;
}

std::optional<RciParameterization> solve_rci_lp(const Matrix& A, const Matrix& B,
                                                const SymBox& state_box,
                                                const SymBox& input_box, const Zonotope& W,
                                                int horizon, double q_eta, double q_theta,
                                                const LpBackend& lp) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  if (A.cols() != n || B.rows() != n || state_box.dim() != n || input_box.dim() != m ||
      W.dimension != n) {
    throw std::invalid_argument("solve_rci_lp: dimension mismatch");
  }
  if (horizon < 1) throw std::invalid_argument("solve_rci_lp: horizon must be >= 1");
  if (!(q_eta >= 0.0) || !(q_theta >= 0.0)) {
    throw std::invalid_argument("solve_rci_lp: objective weights must be nonnegative");
  }

  const int h = horizon;
  const int g = W.num_generators();
  const Matrix& G = W.generators;
  const DesignLayout L(h, n, m, g);

  std::vector<Matrix> Apow = {Matrix::Identity(n, n)};
  for (int l = 1; l <= h; ++l) Apow.push_back(A * Apow.back());
  std::vector<Matrix> AB;  // AB[k] = A^k B
  for (int k = 0; k < h; ++k) AB.push_back(Apow[static_cast<std::size_t>(k)] * B);

  LpProblem p;
  p.c = Vector::Zero(L.num_vars);
  p.c[L.eta] = q_eta;
  p.c[L.theta] = q_theta;
  p.A = Matrix::Zero(L.num_rows, L.num_vars);
  p.b = Vector::Zero(L.num_rows);
  p.lower = Vector::Constant(L.num_vars, -kInf);
  p.upper = Vector::Constant(L.num_vars, kInf);
  for (int v = L.eta; v <= L.theta; ++v) {
    p.lower[v] = 0.0;
    p.upper[v] = 1.0;
  }
  for (int v = L.t_base; v < L.num_vars; ++v) p.lower[v] = 0.0;

  // Terminal nilpotency: A^h + sum_j A^{h-1-j} B M_j = 0, entrywise.
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      const int row = i * n + k;
      for (int j = 0; j < h; ++j) {
        const Matrix& coeff = AB[static_cast<std::size_t>(h - 1 - j)];
        for (int q = 0; q < m; ++q) p.A(row, L.gain(j, q, k)) = coeff(i, q);
      }
      p.b[row] = -Apow[static_cast<std::size_t>(h)](i, k);
    }
  }

  // Magnitude bounds on the error-set terms e_i' D_l g_j for l >= 1.
  int row = L.rows_abs_base;
  for (int l = 1; l < h; ++l) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < g; ++j) {
        const double constant = Apow[static_cast<std::size_t>(l)].row(i) * G.col(j);
        for (int sign = 0; sign < 2; ++sign) {
          const double s = sign == 0 ? 1.0 : -1.0;
          for (int jp = 0; jp < l; ++jp) {
            const Matrix& coeff = AB[static_cast<std::size_t>(l - 1 - jp)];
            for (int q = 0; q < m; ++q) {
              for (int r = 0; r < n; ++r) {
                p.A(row, L.gain(jp, q, r)) = s * coeff(i, q) * G(r, j);
              }
            }
          }
          p.A(row, L.t_var(l, i, j)) = -1.0;
          p.A(row, L.slack(row)) = 1.0;
          p.b[row] = -s * constant;
          ++row;
        }
      }
    }
  }

  // Magnitude bounds on the feedback terms e_p' M_l g_j.
  for (int l = 0; l < h; ++l) {
    for (int q = 0; q < m; ++q) {
      for (int j = 0; j < g; ++j) {
        for (int sign = 0; sign < 2; ++sign) {
          const double s = sign == 0 ? 1.0 : -1.0;
          for (int r = 0; r < n; ++r) p.A(row, L.gain(l, q, r)) = s * G(r, j);
          p.A(row, L.s_var(l, q, j)) = -1.0;
          p.A(row, L.slack(row)) = 1.0;
          ++row;
        }
      }
    }
  }

  // Error set inside eta * X: per axis, the l = 0 layer contributes the
  // constant sum |G(i, :)| and the others their magnitude variables.
  for (int i = 0; i < n; ++i) {
    for (int l = 1; l < h; ++l) {
      for (int j = 0; j < g; ++j) p.A(row, L.t_var(l, i, j)) = 1.0;
    }
    p.A(row, L.eta) = -state_box.halfwidths[i];
    p.A(row, L.slack(row)) = 1.0;
    p.b[row] = -G.row(i).cwiseAbs().sum();
    ++row;
  }

  // Feedback set inside theta * U.
  for (int q = 0; q < m; ++q) {
    for (int l = 0; l < h; ++l) {
      for (int j = 0; j < g; ++j) p.A(row, L.s_var(l, q, j)) = 1.0;
    }
    p.A(row, L.theta) = -input_box.halfwidths[q];
    p.A(row, L.slack(row)) = 1.0;
    ++row;
  }

  const LpResult res = lp.solve(p);
  if (res.status == LpStatus::Infeasible) return std::nullopt;
  if (res.status != LpStatus::Optimal) {
    throw std::runtime_error("solve_rci_lp: unexpected solver status");
  }

  RciParameterization out;
  out.horizon = h;
  for (int l = 0; l < h; ++l) {
    Matrix Ml(m, n);
    for (int q = 0; q < m; ++q) {
      for (int r = 0; r < n; ++r) Ml(q, r) = res.x[L.gain(l, q, r)];
    }
    out.M.push_back(std::move(Ml));
  }
  out.eta = std::clamp(res.x[L.eta], 0.0, 1.0);
  out.theta = std::clamp(res.x[L.theta], 0.0, 1.0);
  out.delta = q_eta * out.eta + q_theta * out.theta;

  auto D = d_matrices(A, B, out.M);
  const double dh_norm = D.back().lpNorm<Eigen::Infinity>();
  if (dh_norm > 1e-8 * (1.0 + Apow[static_cast<std::size_t>(h)].lpNorm<Eigen::Infinity>())) {
    throw std::runtime_error("solve_rci_lp: terminal propagation matrix is not zero");
  }
  D.pop_back();
  out.D = std::move(D);

  // Re-verify the reported scalings directly from the gains.
  for (int i = 0; i < n; ++i) {
    double extent = 0.0;
    for (int l = 0; l < h; ++l) extent += (out.D[static_cast<std::size_t>(l)].row(i) * G).cwiseAbs().sum();
    if (extent > out.eta * state_box.halfwidths[i] + 1e-8) {
      throw std::runtime_error("solve_rci_lp: error-set scaling fails verification");
    }
  }
  for (int q = 0; q < m; ++q) {
    double extent = 0.0;
    for (int l = 0; l < h; ++l) extent += (out.M[static_cast<std::size_t>(l)].row(q) * G).cwiseAbs().sum();
    if (extent > out.theta * input_box.halfwidths[q] + 1e-8) {
      throw std::runtime_error("solve_rci_lp: feedback-set scaling fails verification");
    }
  }
  return out;
}

Zonotope rci_error_set(const RciParameterization& params, const Zonotope& W) {
  Zonotope out = Zonotope::origin(W.dimension);
  for (const auto& Dl : params.D) out = minkowski_sum(out, linear_image(Dl, W));
  return out;
}

Zonotope rci_feedback_set(const RciParameterization& params, const Zonotope& W) {
  if (params.M.empty()) throw std::invalid_argument("rci_feedback_set: empty parameterization");
  Zonotope out = Zonotope::origin(static_cast<int>(params.M.front().rows()));
  for (const auto& Ml : params.M) out = minkowski_sum(out, linear_image(Ml, W));
  return out;
}

PartitionDesign design_partition(const SystemModel& system, const Partition& partition,
                                 const DesignOptions& options, const LpBackend& lp) {
  if (partition.num_elements() != system.num_subsystems()) {
    throw std::invalid_argument("design_partition: partition size must match the system");
  }
  if (options.h_margin < 0) {
    throw std::invalid_argument("design_partition: h_margin must be nonnegative");
  }
  const int num_blocks = partition.num_blocks();

  std::vector<CoalitionModel> models;
  std::vector<Zonotope> Ws;
  std::vector<RciParameterization> full;
  std::vector<int> horizons;
  for (int b = 0; b < num_blocks; ++b) {
    CoalitionModel model = build_coalition(system, partition.blocks[static_cast<std::size_t>(b)]);
    Zonotope W = coalition_disturbance(system, model);
    const int h = controllability_index(model.A, model.B) + options.h_margin;
    auto params = solve_rci_lp(model.A, model.B, model.state_box, model.input_box, W, h,
                               options.q_eta, options.q_theta, lp);
    if (!params) {
      throw PartitionDesignError(
          b, 1,
          "design_partition: block " + std::to_string(b) +
              " cannot confine the full neighbor uncertainty within its boxes");
    }
    models.push_back(std::move(model));
    Ws.push_back(std::move(W));
    full.push_back(std::move(*params));
    horizons.push_back(h);
  }

  // Every subsystem announces the nominal share of its own coalition; the
  // leftovers scale the neighbor boxes in the residual design.
  std::vector<double> residual_scale(static_cast<std::size_t>(system.num_subsystems()), 0.0);
  for (int b = 0; b < num_blocks; ++b) {
    for (const int i : models[static_cast<std::size_t>(b)].members) {
      residual_scale[static_cast<std::size_t>(i)] = full[static_cast<std::size_t>(b)].eta;
    }
  }

  PartitionDesign out{partition, {}};
  for (int b = 0; b < num_blocks; ++b) {
    const auto& model = models[static_cast<std::size_t>(b)];
    Zonotope W_hat = Zonotope::origin(model.state_dim());
    if (options.scaled_residual_outer) {
      double t = 0.0;
      for (const int d : model.external_neighbors) {
        t = std::max(t, residual_scale[static_cast<std::size_t>(d)]);
      }
      if (t > 0.0) {
        W_hat = linear_image(t * Matrix::Identity(model.state_dim(), model.state_dim()),
                             Ws[static_cast<std::size_t>(b)]);
      }
    } else {
      W_hat = coalition_disturbance(system, model, residual_scale);
    }
    auto params = solve_rci_lp(model.A, model.B, model.state_box, model.input_box, W_hat,
                               horizons[static_cast<std::size_t>(b)], options.q_eta,
                               options.q_theta, lp);
    if (!params) {
      throw PartitionDesignError(b, 3,
                                 "design_partition: block " + std::to_string(b) +
                                     " cannot confine the residual uncertainty");
    }
    const auto& f = full[static_cast<std::size_t>(b)];
    double beta_x = f.eta - params->eta;
    double beta_u = f.theta - params->theta;
    if (beta_x < -1e-9 || beta_u < -1e-9) {
      throw PartitionDesignError(b, 4,
                                 "design_partition: block " + std::to_string(b) +
                                     " has no budget left for the planned-error layer");
    }
    beta_x = std::max(beta_x, 0.0);
    beta_u = std::max(beta_u, 0.0);

    CoalitionDesign d{models[static_cast<std::size_t>(b)],
                      Ws[static_cast<std::size_t>(b)],
                      f,
                      std::move(W_hat),
                      std::move(*params),
                      1.0 - f.eta,
                      1.0 - f.theta,
                      beta_x,
                      beta_u,
                      0.0,
                      0.0};
    d.xi_x = d.residual.eta;
    d.xi_u = d.residual.theta;
    out.coalitions.push_back(std::move(d));
  }
  return out;
}

SelectionResult minimal_selection_control(const CoalitionDesign& design, const Vector& error,
                                          const LpBackend& lp) {
  const auto& P = design.residual;
  const Zonotope& W = design.W_hat;
  const int n = design.model.state_dim();
  const int m = design.model.input_dim();
  const int h = P.horizon;
  const int g = W.num_generators();
  if (error.size() != n) {
    throw std::invalid_argument("minimal_selection_control: error dimension mismatch");
  }

  if (g == 0) {
    if (error.lpNorm<Eigen::Infinity>() > 1e-8) {
      throw OutOfTubeError(
          "minimal_selection_control: nonzero error with a zero disturbance set");
    }
    return SelectionResult{Vector::Zero(m),
                           std::vector<Vector>(static_cast<std::size_t>(h), Vector::Zero(n)),
                           0.0, true};
  }

  // Columns of the decomposition: one per (tap, generator) pair.
  Matrix cols(n, h * g);
  for (int l = 0; l < h; ++l) {
    cols.middleCols(l * g, g) = P.D[static_cast<std::size_t>(l)] * W.generators;
  }

  // Variables: radius, then the h*g coefficients, then two slacks per
  // magnitude row; optionally one bounded defect per equality row on the
  // numerical retry.
  const auto build = [&](bool with_defect) {
    const int num_coeff = h * g;
    const int defects = with_defect ? n : 0;
    const int num_vars = 1 + num_coeff + 2 * num_coeff + defects;
    LpProblem p;
    p.c = Vector::Zero(num_vars);
    p.c[0] = 1.0;
    p.A = Matrix::Zero(n + 2 * num_coeff, num_vars);
    p.b = Vector::Zero(n + 2 * num_coeff);
    p.lower = Vector::Constant(num_vars, -kInf);
    p.upper = Vector::Constant(num_vars, kInf);
    p.lower[0] = 0.0;
    for (int k = 0; k < 2 * num_coeff; ++k) p.lower[1 + num_coeff + k] = 0.0;
    p.A.block(0, 1, n, num_coeff) = cols;
    p.b.head(n) = error;
    for (int k = 0; k < num_coeff; ++k) {
      const int r1 = n + 2 * k;
      p.A(r1, 1 + k) = 1.0;
      p.A(r1, 0) = -1.0;
      p.A(r1, 1 + num_coeff + 2 * k) = 1.0;
      p.A(r1 + 1, 1 + k) = -1.0;
      p.A(r1 + 1, 0) = -1.0;
      p.A(r1 + 1, 1 + num_coeff + 2 * k + 1) = 1.0;
    }
    if (with_defect) {
      for (int i = 0; i < n; ++i) {
        const int v = num_vars - defects + i;
        p.A(i, v) = 1.0;
        p.lower[v] = -1e-8;
        p.upper[v] = 1e-8;
      }
    }
    return p;
  };

  LpResult res = lp.solve(build(false));
  if (res.status == LpStatus::Infeasible) res = lp.solve(build(true));
  if (res.status != LpStatus::Optimal) {
    throw OutOfTubeError(
        "minimal_selection_control: error is outside the span of the disturbance history");
  }

  SelectionResult out;
  out.lambda_star = res.x[0];
  out.within_tube = out.lambda_star <= 1.0 + 1e-6;
  out.feedback = Vector::Zero(m);
  for (int l = 0; l < h; ++l) {
    Vector wl = W.generators * res.x.segment(1 + l * g, g);
    out.feedback += P.M[static_cast<std::size_t>(l)] * wl;
    out.w.push_back(std::move(wl));
  }
  return out;
}

double rci_support(const CoalitionDesign& design, const Vector& direction) {
  return support(rci_error_set(design.full_uncertainty, design.W), direction);
}

}  // namespace coalmpc

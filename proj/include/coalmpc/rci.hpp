#pragma once

// Invariant-set design for coalitions, and the scaling-factor pipeline
// that splits each coalition's constraint boxes between three control
// layers:
//
//   alpha : the nominal plan, solved over tightened boxes alpha * X, alpha * U
//   beta  : the planned-error compensation layer
//   xi    : the residual error, confined to a disturbance-invariant set
//
// with alpha + beta + xi = 1 per coalition on both the state and input
// side. The invariant set is not stored as an explicit polytope; it is
// parameterized by feedback gains M_0..M_{h-1} acting on the last h
// disturbances, with error-propagation matrices
//
//   D_0 = I,  D_l = A^l + sum_{j<l} A^{l-1-j} B M_j,  D_h = 0 (enforced)
//
// so that the reachable error set is the zonotope (+)_l D_l W and the
// feedback effort lives in (+)_l M_l W. Gains and box scalings come out of
// one linear program per coalition.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "coalmpc/partition.hpp"
#include "coalmpc/simplex.hpp"
#include "coalmpc/system.hpp"

namespace coalmpc {

struct RciParameterization {
  int horizon = 0;        // h: number of disturbance taps
  std::vector<Matrix> M;  // h gains, each m x n
  std::vector<Matrix> D;  // D_0..D_{h-1} (D_h is zero and not stored)
  double eta = 0.0;       // smallest s with (+)_l D_l W inside s * X
  double theta = 0.0;     // smallest s with (+)_l M_l W inside s * U
  double delta = 0.0;     // attained objective q_eta * eta + q_theta * theta
};

// D_0..D_h for the given gains; the caller checks the final entry.
std::vector<Matrix> d_matrices(const Matrix& A, const Matrix& B,
                               const std::vector<Matrix>& M);

// One design LP: choose gains and the two box scalings, minimizing
// q_eta * eta + q_theta * theta subject to D_h = 0, the error set inside
// eta * X, the feedback set inside theta * U, and eta, theta in [0, 1].
// Empty optional when no gain sequence achieves scalings within [0, 1].
std::optional<RciParameterization> solve_rci_lp(const Matrix& A, const Matrix& B,
                                                const SymBox& state_box,
                                                const SymBox& input_box, const Zonotope& W,
                                                int horizon, double q_eta = 1.0,
                                                double q_theta = 1.0,
                                                const LpBackend& lp = default_lp_backend());

// The explicit error and feedback sets for a given disturbance.
Zonotope rci_error_set(const RciParameterization& params, const Zonotope& W);
Zonotope rci_feedback_set(const RciParameterization& params, const Zonotope& W);

struct CoalitionDesign {
  CoalitionModel model;
  // Designed against the full neighbor uncertainty; sets the nominal
  // tightening and is the right object for cross-partition comparisons.
  Zonotope W;
  RciParameterization full_uncertainty;
  // Designed against the residual uncertainty left after every neighbor
  // announces its own nominal tightening; drives the third control term.
  Zonotope W_hat;
  RciParameterization residual;

  double alpha_x = 0.0, alpha_u = 0.0;  // nominal layer share
  double beta_x = 0.0, beta_u = 0.0;    // planned-error layer share
  double xi_x = 0.0, xi_u = 0.0;        // residual layer share
};

class PartitionDesignError : public std::runtime_error {
 public:
  PartitionDesignError(int block_index, int stage_index, const std::string& what)
      : std::runtime_error(what), block(block_index), stage(stage_index) {}
  int block;
  int stage;
};

struct PartitionDesign {
  Partition partition;
  std::vector<CoalitionDesign> coalitions;  // aligned with partition.blocks
};

struct DesignOptions {
  // Extra disturbance taps beyond the controllability index.
  int h_margin = 0;
  // Objective weights of the design LP.
  double q_eta = 1.0;
  double q_theta = 1.0;
  // Replace the exact residual uncertainty with its cheap outer bound
  // t * W, t = max over neighbors of their leftover state share.
  bool scaled_residual_outer = false;
};

// The full pipeline: per-coalition design LP against the full uncertainty,
// exchange of the nominal scalings, re-design against the residual
// uncertainty, and the budget split. Throws PartitionDesignError with the
// offending block and stage (1: full-uncertainty LP, 3: residual LP,
// 4: negative layer share) when the partition is not designable.
PartitionDesign design_partition(const SystemModel& system, const Partition& partition,
                                 const DesignOptions& options = {},
                                 const LpBackend& lp = default_lp_backend());

// Support function of a coalition's error set under the full neighbor
// uncertainty; the object that shrinks (or holds) in every direction when
// coalitions merge.
double rci_support(const CoalitionDesign& design, const Vector& direction);

class OutOfTubeError : public std::runtime_error {
 public:
  explicit OutOfTubeError(const std::string& what) : std::runtime_error(what) {}
};

struct SelectionResult {
  Vector feedback;        // kappa(e): the third control term
  std::vector<Vector> w;  // the selected disturbance history, w_0..w_{h-1}
  double lambda_star;     // smallest box radius of the selection
  bool within_tube;       // lambda_star <= 1 (+ tolerance)
};

// Decomposes a residual error e into past disturbances, e = sum_l D_l w_l,
// minimizing the largest generator coefficient used, and returns the
// feedback sum_l M_l w_l. Errors beyond the invariant set are still
// decomposed and flagged; errors outside the range space entirely (up to a
// small numerical slack) raise OutOfTubeError.
SelectionResult minimal_selection_control(const CoalitionDesign& design, const Vector& error,
                                          const LpBackend& lp = default_lp_backend());

}  // namespace coalmpc

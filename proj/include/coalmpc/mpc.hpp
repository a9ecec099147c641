#pragma once

// The two per-coalition optimal control problems behind the three-term
// law, as condensed strictly convex QPs over the input sequence:
//
//   primary    plan for the nominal state, boxes shrunk to alpha * X,
//              alpha * U, terminal state pinned to the origin
//   secondary  plan for the accumulated neighbor-plan error, boxes
//              beta * X, beta * U, driven by a known disturbance
//              sequence, terminal error pinned to the origin
//
// plus the feasibility-domain queries used by partition switching and by
// the `regions` command.

#include <optional>
#include <vector>

#include "coalmpc/active_set_qp.hpp"
#include "coalmpc/rci.hpp"
#include "coalmpc/system.hpp"

namespace coalmpc {

// Known-ahead disturbance samples w(0)..w(N); the final entry is zero
// because the neighbors' plans end at the origin. Steps beyond the end
// are treated as zero.
struct DisturbanceSequence {
  std::vector<Vector> values;

  static DisturbanceSequence zero(int dimension, int N);
  int steps() const { return static_cast<int>(values.size()) - 1; }
};

struct PrimarySolution {
  std::vector<Vector> u_seq;  // N inputs
  std::vector<Vector> x_seq;  // N+1 states, last at the origin
  double value = 0.0;         // full-horizon cost including the fixed first state
};

struct SecondarySolution {
  std::vector<Vector> f_seq;  // H inputs
  std::vector<Vector> e_seq;  // H+1 error states, last at the origin
  double value = 0.0;
};

// Plan N steps of the nominal coalition trajectory from x_bar to the
// origin within the alpha-shrunk boxes. Empty optional when x_bar is not
// N-step controllable to zero under those boxes.
std::optional<PrimarySolution> solve_primary(const CoalitionModel& coal,
                                             const CoalitionDesign& design, const Vector& x_bar,
                                             int N,
                                             const QpBackend& qp = default_qp_backend());

// Plan H steps of the planned-error trajectory from e_bar to the origin
// within the beta-shrunk boxes, under the given disturbance sequence.
// Requires H >= w_seq.steps() + 1 so the tail after the disturbances run
// out is long enough to reach zero.
std::optional<SecondarySolution> solve_secondary(const CoalitionModel& coal,
                                                 const CoalitionDesign& design,
                                                 const Vector& e_bar,
                                                 const DisturbanceSequence& w_seq, int H,
                                                 const QpBackend& qp = default_qp_backend());

// True iff every coalition of the partition can solve its primary problem
// with its slice of x as the initial state.
bool is_strongly_feasible(const SystemModel& sys, const PartitionDesign& design,
                          const Vector& x, int N, const QpBackend& qp = default_qp_backend());

// Like is_strongly_feasible, but the nominal initial state is free within
// the per-axis error allowance (beta_x + xi_x) * X_c around the true
// slice: membership test for the set the true state provably stays in.
bool is_feasible_with_margin(const SystemModel& sys, const PartitionDesign& design,
                             const Vector& x, int N,
                             const QpBackend& qp = default_qp_backend());

// Closed form of the one-step-to-origin domain for coalitions with
// decoupled scalar dynamics per coordinate (diagonal A and B): per axis,
// |x| <= min(alpha_x * h_x, alpha_u * h_u * |b| / |a|). with_margin adds
// the (beta_x + xi_x) * X_c error allowance on top.
SymBox one_step_feasible_box(const CoalitionModel& coal, const CoalitionDesign& design,
                             bool with_margin = false);

}  // namespace coalmpc

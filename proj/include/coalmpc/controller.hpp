#pragma once

// The per-coalition online routine. Each time step runs in two phases that
// are synchronous across coalitions: every coalition first solves its
// nominal problem and broadcasts the resulting state plan, then each one
// maps the neighbor plans into a disturbance candidate, replans its error
// layer (falling back to the stored plan when the candidate is worse or
// infeasible), and applies the three-term law
//
//   u = u_nominal(0) + f_planned(0) + tube feedback on the residual error.
//
// plan_nominal and controller_step split the two phases so the simulator can
// place the broadcast barrier between them; controller_step also accepts a
// null nominal solution and solves it internally for single-coalition use.

#include <map>
#include <stdexcept>
#include <vector>

#include "coalmpc/mpc.hpp"
#include "coalmpc/rci.hpp"

namespace coalmpc {

struct ControllerState {
  Vector x_bar;               // nominal coalition state
  Vector e_bar;               // planned error
  DisturbanceSequence w_seq;  // adopted disturbance plan, N+1 entries
  double v_hat = 0.0;         // value bound on the error plan; +inf until one is adopted
};

// Fresh controller state at a measurement: the nominal layer starts on the
// measurement, both error layers at zero, and the value bound open. Used at
// start-up and after every partition switch; the caller is responsible for
// only switching to coalitions whose nominal problem is feasible at x_c.
ControllerState reinitialize(const CoalitionModel& coal, const Vector& x_c, int N);

// Broadcast nominal state plans of the external neighbors, keyed by
// subsystem index; each sequence needs at least N+1 entries.
using NeighborPlans = std::map<int, std::vector<Vector>>;

struct StepTelemetry {
  double primary_value = 0.0;    // nominal cost-to-go at the current plan state
  double secondary_value = 0.0;  // cost of the error plan actually applied
  double v_hat = 0.0;            // value bound after the adoption decision
  double lambda_star = 0.0;      // tube coordinate of the residual error;
                                 // infinite when the tube cannot span it
  bool candidate_adopted = false;
  bool within_tube = true;       // false when the residual needs more than
                                 // the unit tube; the third control term is
                                 // dropped only when the residual cannot be
                                 // decomposed at all (lambda_star infinite)
};

struct StepResult {
  Vector u;
  ControllerState next;
  StepTelemetry telemetry;
};

// Both are theorem-contract violations when they fire on a correctly
// initialized fixed-partition run; the simulator halts on them.
struct PrimaryInfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SecondaryInfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Phase 1: the nominal solve whose state plan is broadcast to neighbors.
PrimarySolution plan_nominal(const CoalitionModel& coal, const CoalitionDesign& design,
                             const ControllerState& state, int N,
                             const QpBackend& qp = default_qp_backend());

// Phase 2, or the whole step when `nominal` is null. Produces the applied
// input, the advanced bookkeeping state, and the step telemetry. The
// candidate disturbance plan built from `plans` is adopted only when its
// replanned value does not exceed the stored bound; otherwise the stored
// plan is replayed and the bound is kept.
StepResult controller_step(const SystemModel& sys, const CoalitionModel& coal,
                           const CoalitionDesign& design, const ControllerState& state,
                           const NeighborPlans& plans, const Vector& x_c, int N, int H,
                           const PrimarySolution* nominal = nullptr,
                           const QpBackend& qp = default_qp_backend(),
                           const LpBackend& lp = default_lp_backend());

}  // namespace coalmpc

#include "coalmpc/controller.hpp"

#include <cmath>
#include <limits>
#include <utility>

namespace coalmpc {

namespace {

// w_candidate(k) = sum_d A_cd x_plan_d(k) over the external neighbors. The
// final entry is pinned to exact zero: every neighbor plan ends on its
// terminal equality, so the true value is zero up to solver tolerance, and
// the error layer requires it exactly.
DisturbanceSequence candidate_from_plans(const SystemModel& sys, const CoalitionModel& coal,
                                         const NeighborPlans& plans, int N) {
  DisturbanceSequence w = DisturbanceSequence::zero(coal.state_dim(), N);
  for (const int d : coal.external_neighbors) {
    const auto it = plans.find(d);
    if (it == plans.end()) {
      throw std::invalid_argument("controller_step: missing plan for neighbor " +
                                  std::to_string(d));
    }
    if (it->second.size() < static_cast<std::size_t>(N) + 1) {
      throw std::invalid_argument("controller_step: neighbor plan shorter than the horizon");
    }
    const Matrix L = coalition_coupling(sys, coal, d);
    for (int k = 0; k <= N; ++k) {
      const Vector& xd = it->second[static_cast<std::size_t>(k)];
      if (xd.size() != sys.state_dim(d)) {
        throw std::invalid_argument("controller_step: neighbor plan has wrong dimension");
      }
      w.values[static_cast<std::size_t>(k)] += L * xd;
    }
  }
  w.values.back().setZero();
  return w;
}

}  // namespace

ControllerState reinitialize(const CoalitionModel& coal, const Vector& x_c, int N) {
  if (x_c.size() != coal.state_dim()) {
    throw std::invalid_argument("reinitialize: state dimension mismatch");
  }
  if (N < 1) throw std::invalid_argument("reinitialize: horizon must be at least 1");
  return ControllerState{x_c, Vector::Zero(coal.state_dim()),
                         DisturbanceSequence::zero(coal.state_dim(), N),
                         std::numeric_limits<double>::infinity()};
}

PrimarySolution plan_nominal(const CoalitionModel& coal, const CoalitionDesign& design,
                             const ControllerState& state, int N, const QpBackend& qp) {
  auto sol = solve_primary(coal, design, state.x_bar, N, qp);
  if (!sol) {
    throw PrimaryInfeasibleError("nominal problem infeasible at the plan state");
  }
  return std::move(*sol);
}

StepResult controller_step(const SystemModel& sys, const CoalitionModel& coal,
                           const CoalitionDesign& design, const ControllerState& state,
                           const NeighborPlans& plans, const Vector& x_c, int N, int H,
                           const PrimarySolution* nominal, const QpBackend& qp,
                           const LpBackend& lp) {
  if (x_c.size() != coal.state_dim()) {
    throw std::invalid_argument("controller_step: measurement dimension mismatch");
  }
  PrimarySolution primary = nominal ? *nominal : plan_nominal(coal, design, state, N, qp);

  // Map the broadcast neighbor plans into this coalition's frame and try to
  // adopt them; keep the stored plan whenever the candidate does not improve
  // the bound.
  DisturbanceSequence candidate = candidate_from_plans(sys, coal, plans, N);
  auto replanned = solve_secondary(coal, design, state.e_bar, candidate, H, qp);

  StepTelemetry tele;
  DisturbanceSequence w_adopted = state.w_seq;
  double v_hat = state.v_hat;
  SecondarySolution secondary;
  if (replanned && replanned->value <= v_hat) {
    tele.candidate_adopted = true;
    w_adopted = std::move(candidate);
    v_hat = replanned->value;
    secondary = std::move(*replanned);
  } else {
    auto stored = solve_secondary(coal, design, state.e_bar, state.w_seq, H, qp);
    if (!stored) {
      throw SecondaryInfeasibleError("error plan infeasible under both the candidate and the stored disturbance");
    }
    secondary = std::move(*stored);
  }

  const Vector e_hat = x_c - state.x_bar - state.e_bar;
  // The residual error normally decomposes into the tube. It can escape the
  // tube's span when a neighbor re-optimizes away from a plan this coalition
  // still holds stored (the replanned layers are blind to that drift, and a
  // neighbor with a full state share leaves a zero-width tube here). The
  // planned layers stay sound, so the event is flagged rather than fatal and
  // the third term is dropped for the step.
  SelectionResult selection{};
  try {
    selection = minimal_selection_control(design, e_hat, lp);
  } catch (const OutOfTubeError&) {
    selection.feedback = Vector::Zero(coal.input_dim());
    selection.lambda_star = std::numeric_limits<double>::infinity();
    selection.within_tube = false;
  }
  // When the residual decomposes but needs more than the unit tube
  // (lambda_star > 1), the feedback is still applied in full: the gain
  // recursion only cancels the error's tap structure at the exact
  // decomposition, so any rescaling would push the next residual out of
  // the decomposable subspace and lose the third term permanently.

  tele.primary_value = primary.value;
  tele.secondary_value = secondary.value;
  tele.v_hat = v_hat;
  tele.lambda_star = selection.lambda_star;
  tele.within_tube = selection.within_tube;

  const Vector& u0 = primary.u_seq.front();
  const Vector& f0 = secondary.f_seq.front();

  StepResult result;
  result.u = u0 + f0 + selection.feedback;

  result.next.x_bar = coal.A * state.x_bar + coal.B * u0;
  result.next.e_bar = coal.A * state.e_bar + coal.B * f0 + w_adopted.values.front();
  result.next.w_seq.values.assign(w_adopted.values.begin() + 1, w_adopted.values.end());
  result.next.w_seq.values.push_back(Vector::Zero(coal.state_dim()));
  result.next.v_hat =
      v_hat - (state.e_bar.dot(coal.Q * state.e_bar) + f0.dot(coal.R * f0));
  result.telemetry = tele;
  return result;
}

}  // namespace coalmpc

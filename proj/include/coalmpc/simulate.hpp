#pragma once

// Closed-loop simulation on a single timeline: partition selection through
// the consensus game at a fixed cadence, switching gated by strong
// feasibility and dwell time, controller re-initialization on every adopted
// switch, the synchronous two-phase control step, and cost accounting.
//
// Designs are cached per partition key (the design LPs are state
// independent), so re-adopting a partition is free. Per-coalition solves
// inside a step run in parallel, capped by the COALMPC_THREADS environment
// variable; the outputs do not depend on the thread count.

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coalmpc/controller.hpp"
#include "coalmpc/game.hpp"
#include "coalmpc/mpc.hpp"
#include "coalmpc/partition.hpp"
#include "coalmpc/rci.hpp"
#include "coalmpc/system.hpp"

namespace coalmpc {

// Horizons and design knobs shared by every run. link_power_weight is the
// per-pair constant of the reported coordination-cost column; it scales a
// count of in-block pairs and is not part of the game's cost.
struct MpcConfig {
  int N = 5;
  int H = 6;  // must stay >= N + 1
  DesignOptions design{};
  double link_power_weight = 0.2;
};

struct SwitchConfig {
  // The game runs at steps k = selection_period, 2 * selection_period, ...
  // (never at k = 0; the initial partition covers the first window, and a
  // period beyond T forbids switching entirely).
  int selection_period = 1;
  // Steps that must have elapsed since the previous adopted switch. The
  // first switch of a run is not dwell-constrained.
  int min_dwell = 1;
};

// One adopted switch. The gate can be audited from the record: at `step`
// the state was `state`, the new partition had a cached design, and
// is_strongly_feasible(to, state) held.
struct SwitchEvent {
  int step = 0;
  std::string from;
  std::string to;
  int dwell = 0;  // steps since the previous switch, or since start
  Vector state;
};

struct StepRecord {
  int step = 0;
  Vector x;  // full state at the start of the step
  Vector u;  // full applied input
  std::string partition_key;
  double v_bar_total = 0.0;  // summed nominal plan values, V(x_bar)
  double v_hat_total = 0.0;  // summed error-plan value bounds
  // Stage cost of the nominal layer, x_bar'Q x_bar + u0'R u0 summed over
  // coalitions: the amount v_bar_total must drop by between fixed steps.
  double nominal_stage = 0.0;
  bool switched = false;     // a switch was adopted at this step
  std::vector<StepTelemetry> coalitions;  // aligned with the partition blocks
};

struct SimulationResult {
  std::vector<StepRecord> steps;
  Vector final_state;
  // Sum over recorded steps of x'Qx + u'Ru with the subsystem weights.
  double regulation_cost = 0.0;
  // link_power_weight * (in-block pairs of the active partition), averaged
  // over steps: the reported state-independent coordination cost.
  double link_power_cost = 0.0;
  // Half the summed per-player game power terms at the active partition,
  // averaged over steps (state dependent through the coupling weights).
  double game_power_cost = 0.0;
  std::vector<SwitchEvent> switches;
  int last_selection_step = -1;  // most recent game run, -1 when none ran
};

// The documented user-level failures: the starting partition cannot be
// designed, or the initial state is outside its strong feasibility region.
struct InfeasibleStartError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A controller contract violation mid-run, annotated with the step index.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(int step_index, const std::string& what)
      : std::runtime_error(what), step(step_index) {}
  int step;
};

// Time-varying run: T control steps from x0 starting on initial_partition.
// initial_opinions seeds the first game (null: everyone starts on the
// initial partition); later games warm start from the previous equilibrium.
SimulationResult run(const SystemModel& sys, const Vector& x0, int T,
                     const Partition& initial_partition, const GameConfig& game_cfg,
                     const SwitchConfig& switch_cfg, const MpcConfig& mpc_cfg,
                     const Profile* initial_opinions = nullptr);

// Static-partition baseline row: same pipeline with selection disabled.
// The game-power aggregate uses default game constants.
SimulationResult fixed_partition_run(const SystemModel& sys, const Vector& x0, int T,
                                     const Partition& partition, const MpcConfig& mpc_cfg);

struct StabilityReport {
  std::vector<double> value_samples;  // v_bar_total per step
  double mu_hat = 0.0;                // max sample / first sample; NaN when degenerate
  double terminal_norm = 0.0;         // |x(T)|
  bool degenerate = false;            // zero initial value: mu_hat is 0/0
  // True when the last game run adopted nothing (or none ran): the
  // switching signal gave no sign of further movement. It cannot be forced,
  // only reported.
  bool switching_settled = true;
};

StabilityReport stability_monitor(const SimulationResult& result);

// Text artifacts. CSV: header row, comma separator, LF endings, numbers at
// nine significant digits; one row per step with time = step * time_step.
void write_steps_csv(std::ostream& out, const SimulationResult& result, double time_step);
// JSON summary: aggregate costs, step count, terminal state, switch log.
nlohmann::ordered_json summary_json(const SimulationResult& result);
nlohmann::ordered_json stability_json(const StabilityReport& report);

// %.9g with the C locale; the formatting used by every emitted artifact.
std::string format_sig9(double v);

}  // namespace coalmpc

#include "coalmpc/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace coalmpc {

namespace {

int thread_cap() {
  if (const char* env = std::getenv("COALMPC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(std::min<long>(v, 64));
    return 1;  // unparseable caps conservatively
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(std::min(hw, 16u));
}

// Runs body(i) for i in [0, count), possibly across threads. Each slot is
// written by exactly one invocation, so the outcome does not depend on the
// schedule; the first failing index (by order, not by time) is rethrown as
// a SimulationError for the given step.
template <typename Body>
void solve_all(int count, int step_index, Body&& body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  const int workers = std::min(thread_cap(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) {
      try {
        body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
          try {
            body(i);
          } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (int i = 0; i < count; ++i) {
    if (!errors[static_cast<std::size_t>(i)]) continue;
    try {
      std::rethrow_exception(errors[static_cast<std::size_t>(i)]);
    } catch (const std::exception& e) {
      throw SimulationError(step_index, "step " + std::to_string(step_index) + ", coalition " +
                                            std::to_string(i) + ": " + e.what());
    }
  }
}

Vector gather_state(const SystemModel& sys, const CoalitionModel& coal, const Vector& x) {
  Vector out(coal.state_dim());
  for (std::size_t idx = 0; idx < coal.members.size(); ++idx) {
    const int member = coal.members[idx];
    out.segment(coal.member_state_offset[idx], sys.state_dim(member)) =
        x.segment(sys.state_offset(member), sys.state_dim(member));
  }
  return out;
}

void scatter_input(const SystemModel& sys, const CoalitionModel& coal, const Vector& u_c,
                   Vector& u) {
  for (std::size_t idx = 0; idx < coal.members.size(); ++idx) {
    const int member = coal.members[idx];
    u.segment(sys.input_offset(member), sys.input_dim(member)) =
        u_c.segment(coal.member_input_offset[idx], sys.input_dim(member));
  }
}

// Every subsystem's nominal state plan, sliced out of its coalition's
// solution; the broadcast that phase two consumes.
NeighborPlans broadcast_plans(const SystemModel& sys, const PartitionDesign& design,
                              const std::vector<PrimarySolution>& nominal) {
  NeighborPlans plans;
  for (std::size_t c = 0; c < design.coalitions.size(); ++c) {
    const CoalitionModel& coal = design.coalitions[c].model;
    for (std::size_t idx = 0; idx < coal.members.size(); ++idx) {
      const int member = coal.members[idx];
      std::vector<Vector> seq;
      seq.reserve(nominal[c].x_seq.size());
      for (const Vector& xk : nominal[c].x_seq) {
        seq.push_back(xk.segment(coal.member_state_offset[idx], sys.state_dim(member)));
      }
      plans[member] = std::move(seq);
    }
  }
  return plans;
}

// Design cache keyed by canonical partition key; failures are cached too so
// a rejected candidate is not re-solved at every selection event.
class DesignCache {
 public:
  DesignCache(const SystemModel& sys, const DesignOptions& options)
      : sys_(sys), options_(options) {}

  // The design, or null with the failure message left in last_error().
  const PartitionDesign* get(const Partition& partition) {
    const std::string key = canonical_key(partition);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      Entry entry;
      try {
        entry.design = design_partition(sys_, partition, options_);
      } catch (const PartitionDesignError& e) {
        entry.error = e.what();
      }
      it = entries_.emplace(key, std::move(entry)).first;
    }
    last_error_ = it->second.error;
    return it->second.design ? &*it->second.design : nullptr;
  }

  const std::string& last_error() const { return last_error_; }

 private:
  struct Entry {
    std::optional<PartitionDesign> design;
    std::string error;
  };
  const SystemModel& sys_;
  DesignOptions options_;
  std::map<std::string, Entry> entries_;
  std::string last_error_;
};

double sig9_round(double v) {
  if (!std::isfinite(v)) return v;
  return std::strtod(format_sig9(v).c_str(), nullptr);
}

SimulationResult simulate_core(const SystemModel& sys, const Vector& x0, int T,
                               const Partition& initial_partition, const GameConfig& game_cfg,
                               const SwitchConfig* switching, const MpcConfig& mpc,
                               const Profile* initial_opinions) {
  if (x0.size() != sys.total_state_dim()) {
    throw std::invalid_argument("run: initial state has dimension " +
                                std::to_string(x0.size()) + ", system needs " +
                                std::to_string(sys.total_state_dim()));
  }
  if (T < 0) throw std::invalid_argument("run: negative step count");
  if (mpc.N < 1) throw std::invalid_argument("run: plan horizon must be at least 1");
  if (mpc.H < mpc.N + 1) {
    throw std::invalid_argument("run: error horizon must be at least the plan horizon plus 1");
  }
  if (switching) {
    if (switching->selection_period < 1) {
      throw std::invalid_argument("run: selection period must be at least 1");
    }
    if (switching->min_dwell < 1) throw std::invalid_argument("run: dwell must be at least 1");
  }

  DesignCache cache(sys, mpc.design);
  const PartitionDesign* design = cache.get(initial_partition);
  std::string current_key = canonical_key(initial_partition);
  if (!design) {
    throw InfeasibleStartError("partition " + current_key +
                               " is not designable: " + cache.last_error());
  }
  if (!is_strongly_feasible(sys, *design, x0, mpc.N)) {
    throw InfeasibleStartError("initial state is not strongly feasible for partition " +
                               current_key);
  }

  const Matrix A_full = sys.assemble_state_matrix();
  const Matrix B_full = sys.assemble_input_matrix();
  Matrix Q_full = Matrix::Zero(sys.total_state_dim(), sys.total_state_dim());
  Matrix R_full = Matrix::Zero(sys.total_input_dim(), sys.total_input_dim());
  for (int i = 0; i < sys.num_subsystems(); ++i) {
    Q_full.block(sys.state_offset(i), sys.state_offset(i), sys.state_dim(i), sys.state_dim(i)) =
        sys.subsystem(i).Q;
    R_full.block(sys.input_offset(i), sys.input_offset(i), sys.input_dim(i), sys.input_dim(i)) =
        sys.subsystem(i).R;
  }

  auto fresh_states = [&](const PartitionDesign& d, const Vector& x) {
    std::vector<ControllerState> states;
    states.reserve(d.coalitions.size());
    for (const CoalitionDesign& cd : d.coalitions) {
      states.push_back(reinitialize(cd.model, gather_state(sys, cd.model, x), mpc.N));
    }
    return states;
  };

  Vector x = x0;
  std::vector<ControllerState> states = fresh_states(*design, x);
  Profile profile = initial_opinions
                        ? *initial_opinions
                        : Profile{std::vector<Partition>(
                              static_cast<std::size_t>(sys.num_subsystems()), design->partition)};

  SimulationResult result;
  result.steps.reserve(static_cast<std::size_t>(T));
  std::optional<int> last_switch;
  double link_power_sum = 0.0;
  double game_power_sum = 0.0;

  for (int k = 0; k < T; ++k) {
    bool switched = false;
    if (switching && k > 0 && k % switching->selection_period == 0) {
      const ConsensusResult game = run_consensus(sys, profile, x, game_cfg);
      profile = game.profile;
      result.last_selection_step = k;
      if (game.converged) {
        const Partition candidate = profile.is_consensus() ? profile.opinions.front()
                                                           : induced_partition(sys, profile);
        const std::string candidate_key = canonical_key(candidate);
        const bool dwell_ok = !last_switch || k - *last_switch >= switching->min_dwell;
        if (candidate_key != current_key && dwell_ok) {
          const PartitionDesign* next_design = cache.get(candidate);
          if (next_design && is_strongly_feasible(sys, *next_design, x, mpc.N)) {
            result.switches.push_back(SwitchEvent{k, current_key, candidate_key,
                                                  last_switch ? k - *last_switch : k, x});
            design = next_design;
            current_key = candidate_key;
            states = fresh_states(*design, x);
            last_switch = k;
            switched = true;
          }
        }
      }
    }

    const int blocks = static_cast<int>(design->coalitions.size());
    std::vector<PrimarySolution> nominal(static_cast<std::size_t>(blocks));
    solve_all(blocks, k, [&](int c) {
      const CoalitionDesign& cd = design->coalitions[static_cast<std::size_t>(c)];
      nominal[static_cast<std::size_t>(c)] =
          plan_nominal(cd.model, cd, states[static_cast<std::size_t>(c)], mpc.N);
    });
    const NeighborPlans plans = broadcast_plans(sys, *design, nominal);
    std::vector<StepResult> outcome(static_cast<std::size_t>(blocks));
    solve_all(blocks, k, [&](int c) {
      const CoalitionDesign& cd = design->coalitions[static_cast<std::size_t>(c)];
      outcome[static_cast<std::size_t>(c)] = controller_step(
          sys, cd.model, cd, states[static_cast<std::size_t>(c)], plans,
          gather_state(sys, cd.model, x), mpc.N, mpc.H, &nominal[static_cast<std::size_t>(c)]);
    });

    StepRecord row;
    row.step = k;
    row.x = x;
    row.u = Vector::Zero(sys.total_input_dim());
    row.partition_key = current_key;
    row.switched = switched;
    for (int c = 0; c < blocks; ++c) {
      const CoalitionDesign& cd = design->coalitions[static_cast<std::size_t>(c)];
      scatter_input(sys, cd.model, outcome[static_cast<std::size_t>(c)].u, row.u);
      row.v_bar_total += nominal[static_cast<std::size_t>(c)].value;
      row.v_hat_total += outcome[static_cast<std::size_t>(c)].telemetry.v_hat;
      const Vector& x_bar = states[static_cast<std::size_t>(c)].x_bar;
      const Vector& u0 = nominal[static_cast<std::size_t>(c)].u_seq.front();
      row.nominal_stage += x_bar.dot(cd.model.Q * x_bar) + u0.dot(cd.model.R * u0);
      row.coalitions.push_back(outcome[static_cast<std::size_t>(c)].telemetry);
    }

    result.regulation_cost += x.dot(Q_full * x) + row.u.dot(R_full * row.u);
    link_power_sum += mpc.link_power_weight * in_block_pairs(design->partition);
    const Profile active{std::vector<Partition>(
        static_cast<std::size_t>(sys.num_subsystems()), design->partition)};
    game_power_sum += potential(sys, active, x, game_cfg) / (2.0 * game_cfg.rho);

    x = A_full * x + B_full * row.u;
    for (int c = 0; c < blocks; ++c) {
      states[static_cast<std::size_t>(c)] = std::move(outcome[static_cast<std::size_t>(c)].next);
    }
    result.steps.push_back(std::move(row));
  }

  result.final_state = x;
  if (T > 0) {
    result.link_power_cost = link_power_sum / T;
    result.game_power_cost = game_power_sum / T;
  }
  return result;
}

}  // namespace

SimulationResult run(const SystemModel& sys, const Vector& x0, int T,
                     const Partition& initial_partition, const GameConfig& game_cfg,
                     const SwitchConfig& switch_cfg, const MpcConfig& mpc_cfg,
                     const Profile* initial_opinions) {
  return simulate_core(sys, x0, T, initial_partition, game_cfg, &switch_cfg, mpc_cfg,
                       initial_opinions);
}

SimulationResult fixed_partition_run(const SystemModel& sys, const Vector& x0, int T,
                                     const Partition& partition, const MpcConfig& mpc_cfg) {
  return simulate_core(sys, x0, T, partition, GameConfig{}, nullptr, mpc_cfg, nullptr);
}

StabilityReport stability_monitor(const SimulationResult& result) {
  StabilityReport report;
  report.value_samples.reserve(result.steps.size());
  for (const StepRecord& row : result.steps) report.value_samples.push_back(row.v_bar_total);
  report.terminal_norm = result.final_state.size() > 0 ? result.final_state.norm() : 0.0;
  if (report.value_samples.empty() || report.value_samples.front() <= 0.0) {
    report.degenerate = true;
    report.mu_hat = std::numeric_limits<double>::quiet_NaN();
  } else {
    const double v0 = report.value_samples.front();
    double peak = 0.0;
    for (double v : report.value_samples) peak = std::max(peak, v);
    report.mu_hat = peak / v0;
  }
  report.switching_settled =
      result.switches.empty() || result.last_selection_step > result.switches.back().step;
  return report;
}

std::string format_sig9(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void write_steps_csv(std::ostream& out, const SimulationResult& result, double time_step) {
  const int n = result.steps.empty() ? 0 : static_cast<int>(result.steps.front().x.size());
  const int m = result.steps.empty() ? 0 : static_cast<int>(result.steps.front().u.size());
  out << "time";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  for (int i = 1; i <= m; ++i) out << ",u" << i;
  out << ",partition_key,V_bar_total,V_hat_total,switch_flag\n";
  for (const StepRecord& row : result.steps) {
    out << format_sig9(row.step * time_step);
    for (int i = 0; i < n; ++i) out << ',' << format_sig9(row.x[i]);
    for (int i = 0; i < m; ++i) out << ',' << format_sig9(row.u[i]);
    out << ',' << row.partition_key << ',' << format_sig9(row.v_bar_total) << ','
        << format_sig9(row.v_hat_total) << ',' << (row.switched ? 1 : 0) << '\n';
  }
}

nlohmann::ordered_json summary_json(const SimulationResult& result) {
  nlohmann::ordered_json j;
  j["steps"] = result.steps.size();
  j["regulation_cost"] = sig9_round(result.regulation_cost);
  j["link_power_cost"] = sig9_round(result.link_power_cost);
  j["game_power_cost"] = sig9_round(result.game_power_cost);
  nlohmann::ordered_json state = nlohmann::ordered_json::array();
  for (int i = 0; i < result.final_state.size(); ++i) {
    state.push_back(sig9_round(result.final_state[i]));
  }
  j["final_state"] = std::move(state);
  j["final_state_norm"] =
      sig9_round(result.final_state.size() > 0 ? result.final_state.norm() : 0.0);
  nlohmann::ordered_json switches = nlohmann::ordered_json::array();
  for (const SwitchEvent& s : result.switches) {
    nlohmann::ordered_json e;
    e["step"] = s.step;
    e["from"] = s.from;
    e["to"] = s.to;
    e["dwell"] = s.dwell;
    switches.push_back(std::move(e));
  }
  j["switches"] = std::move(switches);
  return j;
}

nlohmann::ordered_json stability_json(const StabilityReport& report) {
  nlohmann::ordered_json j;
  j["initial_value"] = report.value_samples.empty() ? 0.0 : sig9_round(report.value_samples.front());
  double peak = 0.0;
  for (double v : report.value_samples) peak = std::max(peak, v);
  j["peak_value"] = sig9_round(peak);
  if (report.degenerate) {
    j["mu_hat"] = nullptr;
  } else {
    j["mu_hat"] = sig9_round(report.mu_hat);
  }
  j["terminal_norm"] = sig9_round(report.terminal_norm);
  j["degenerate"] = report.degenerate;
  j["switching_settled"] = report.switching_settled;
  return j;
}

}  // namespace coalmpc

#pragma once

// Benchmark descriptions loaded from .scn files: the network model
// (continuous blocks plus a sample time, or already-discrete blocks),
// controller horizons and design weights, game constants, switch gating,
// and the runs themselves (length, start state, starting partition,
// optional starting opinions).
//
// The format is INI-like: `[section]` headers over `key = value` lines,
// with '#' starting a comment. Matrices list their rows separated by ';',
// entries separated by whitespace; vectors are a single row. Serialization
// emits a canonical form (fixed section and key order, shortest exact
// float spelling), and parsing it back yields an equal scenario.

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coalmpc/game.hpp"
#include "coalmpc/simulate.hpp"
#include "coalmpc/system.hpp"

namespace coalmpc {

class ScenarioError : public std::runtime_error {
 public:
  explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

// One simulation entry point: how long, from where, under which partition.
struct RunSetup {
  int T = 0;
  Vector x0;
  std::string initial_partition;       // canonical partition key
  std::vector<std::string> opinions;   // one key per subsystem; empty means
                                       // every player starts at the current
                                       // partition (switching runs only)
};

struct Scenario {
  // Model blocks exactly as written in the file. Continuous models carry a
  // sample time and hold mode and are discretized by build_system().
  bool discrete = false;
  double sample_time = 0.0;
  ZohMode zoh = ZohMode::CoupledHold;
  std::vector<SubsystemModel> subsystems;
  std::map<std::pair<int, int>, Matrix> coupling;

  MpcConfig mpc;
  GameConfig game;
  SwitchConfig switch_cfg;
  RunSetup fixed_run;      // [simulation]
  RunSetup switching_run;  // [switching]; run keys omitted there fall back
                           // to the [simulation] values

  SystemModel build_system() const;
  int total_state_dim() const;
};

// Throws ScenarioError with the offending section and key on any schema
// violation: unknown or duplicate keys, dimension mismatches, horizons with
// H < N + 1, partition keys that do not parse at the system size.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);

std::string serialize_scenario(const Scenario& sc);

// Shortest decimal spelling that parses back to exactly this value.
std::string format_exact(double v);

}  // namespace coalmpc

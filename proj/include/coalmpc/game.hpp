#pragma once

// The partition-selection game. Every subsystem holds an opinion (a whole
// system partition) and pays for disagreeing with coupled neighbors about
// their shared link plus a power charge for each link its own opinion keeps
// joined. The game is an exact potential game, so serial strict-improvement
// play terminates, and the terminal profile induces the partition the
// simulator switches to.

#include <string>
#include <vector>

#include "coalmpc/partition.hpp"
#include "coalmpc/system.hpp"

namespace coalmpc {

struct GameConfig {
  double rho = 0.5;      // weight of the power term inside local costs
  double epsilon = 0.05; // state-independent charge per joined link
  double sigma = 1.0;    // uniform link weight
  int delta_moves = 1;   // opinion moves may change the block count this much
};

struct Profile {
  std::vector<Partition> opinions;  // one per subsystem

  bool is_consensus() const;
};

// Interaction strength of the link between i and j at the current state:
// half of (coupling norm from j into i) * |x_j| plus the mirror term.
// Symmetric in (i, j) by construction; zero for uncoupled pairs.
double coupling_weight(const SystemModel& sys, int i, int j, const Vector& x);

// Disagreement plus weighted power cost of player i's opinion. Sums run
// over the undirected interaction neighbors of i.
double local_cost(const SystemModel& sys, int i, const Profile& profile, const Vector& x,
                  const GameConfig& cfg);

// Exact potential: half the total disagreement cost plus the full weighted
// power sum. Any unilateral opinion change moves this by exactly the change
// in the player's own local cost.
double potential(const SystemModel& sys, const Profile& profile, const Vector& x,
                 const GameConfig& cfg);

// Cheapest opinion for player i among the comparable partitions within
// cfg.delta_moves block-count changes (the current opinion included); ties
// go to the lexicographically smallest key.
Partition best_response(const SystemModel& sys, int i, const Profile& profile, const Vector& x,
                        const GameConfig& cfg);

struct ConsensusUpdate {
  int player = 0;
  std::string chosen_key;
  double cost = 0.0;       // player's local cost after the move
  double potential = 0.0;  // potential after the move
};

struct ConsensusResult {
  Profile profile;
  std::vector<ConsensusUpdate> updates;  // accepted moves, in order
  bool converged = false;
};

// Serial sweeps over the players; a player moves only when its best response
// strictly improves its local cost. Terminates when a full sweep passes
// without a move, or gives up after max_sweeps.
ConsensusResult run_consensus(const SystemModel& sys, const Profile& initial, const Vector& x,
                              const GameConfig& cfg, int max_sweeps = 100);

// Equilibrium certificate by exhaustive unilateral deviation over the whole
// partition lattice. Brute force; rejects systems with more than 6
// subsystems.
bool is_nash(const SystemModel& sys, const Profile& profile, const Vector& x,
             const GameConfig& cfg);

// The partition the profile actually agrees on: links that both endpoint
// opinions keep joined, closed into connected components. Equals the common
// opinion on consensus profiles whose blocks are connected in the
// interaction graph; never joins more than the opinions do.
Partition induced_partition(const SystemModel& sys, const Profile& profile);

}  // namespace coalmpc

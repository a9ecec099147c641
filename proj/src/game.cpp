#include "coalmpc/game.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <map>
#include <stdexcept>

#include <Eigen/SVD>

namespace coalmpc {

namespace {

void check_config(const GameConfig& cfg) {
  if (!(cfg.rho > 0.0)) throw std::invalid_argument("game: rho must be positive");
  if (cfg.epsilon < 0.0) throw std::invalid_argument("game: epsilon must be nonnegative");
  if (!(cfg.sigma > 0.0)) throw std::invalid_argument("game: sigma must be positive");
  if (cfg.delta_moves < 1) throw std::invalid_argument("game: delta_moves must be at least 1");
}

void check_profile(const SystemModel& sys, const Profile& profile) {
  const int M = sys.num_subsystems();
  if (profile.opinions.size() != static_cast<std::size_t>(M)) {
    throw std::invalid_argument("game: one opinion per subsystem required");
  }
  for (const Partition& C : profile.opinions) {
    if (C.num_elements() != M) {
      throw std::invalid_argument("game: opinion is not a partition of the subsystems");
    }
  }
}

double spectral_norm(const Matrix& A) {
  if (A.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(A).singularValues()(0);
}

// The two cost pieces of player i, before the rho weighting.
struct CostPieces {
  double disagreement = 0.0;
  double power = 0.0;
};

CostPieces cost_pieces(const SystemModel& sys, int i, const Profile& profile, const Vector& x,
                       const GameConfig& cfg) {
  CostPieces out;
  for (const int j : sys.symmetric_neighbors(i)) {
    const double w = coupling_weight(sys, i, j, x);
    const int own = delta_indicator(profile.opinions[static_cast<std::size_t>(i)], i, j);
    const int theirs = delta_indicator(profile.opinions[static_cast<std::size_t>(j)], i, j);
    out.disagreement += w * std::abs(own - theirs);
    out.power += (w + cfg.epsilon) * cfg.sigma * (1 - own);
  }
  return out;
}

}  // namespace

bool Profile::is_consensus() const {
  for (std::size_t i = 1; i < opinions.size(); ++i) {
    if (!(opinions[i] == opinions[0])) return false;
  }
  return true;
}

double coupling_weight(const SystemModel& sys, int i, int j, const Vector& x) {
  if (i == j) throw std::invalid_argument("coupling_weight: distinct subsystems required");
  if (x.size() != sys.total_state_dim()) {
    throw std::invalid_argument("coupling_weight: full system state required");
  }
  if (!sys.has_coupling(i, j) && !sys.has_coupling(j, i)) return 0.0;
  const double xi = x.segment(sys.state_offset(i), sys.state_dim(i)).norm();
  const double xj = x.segment(sys.state_offset(j), sys.state_dim(j)).norm();
  return 0.5 * (spectral_norm(sys.coupling_block(i, j)) * xj +
                spectral_norm(sys.coupling_block(j, i)) * xi);
}

double local_cost(const SystemModel& sys, int i, const Profile& profile, const Vector& x,
                  const GameConfig& cfg) {
  check_config(cfg);
  check_profile(sys, profile);
  const CostPieces p = cost_pieces(sys, i, profile, x, cfg);
  return p.disagreement + cfg.rho * p.power;
}

double potential(const SystemModel& sys, const Profile& profile, const Vector& x,
                 const GameConfig& cfg) {
  check_config(cfg);
  check_profile(sys, profile);
  double disagreement = 0.0, power = 0.0;
  for (int i = 0; i < sys.num_subsystems(); ++i) {
    const CostPieces p = cost_pieces(sys, i, profile, x, cfg);
    disagreement += p.disagreement;
    power += p.power;
  }
  // The half undoes the double count of mirrored disagreement terms; the
  // power terms are owned by their player and enter whole. This is what
  // makes unilateral deviations move the potential by exactly the deviator's
  // cost change.
  return 0.5 * disagreement + cfg.rho * power;
}

Partition best_response(const SystemModel& sys, int i, const Profile& profile, const Vector& x,
                        const GameConfig& cfg) {
  check_config(cfg);
  check_profile(sys, profile);
  std::vector<Partition> candidates =
      delta_neighborhood(profile.opinions[static_cast<std::size_t>(i)], cfg.delta_moves);
  std::sort(candidates.begin(), candidates.end(),
            [](const Partition& a, const Partition& b) {
              return canonical_key(a) < canonical_key(b);
            });
  Profile trial = profile;
  Partition best = candidates.front();
  double best_cost = std::numeric_limits<double>::infinity();
  for (const Partition& C : candidates) {
    trial.opinions[static_cast<std::size_t>(i)] = C;
    const double cost = local_cost(sys, i, trial, x, cfg);
    if (cost < best_cost) {
      best_cost = cost;
      best = C;
    }
  }
  return best;
}

ConsensusResult run_consensus(const SystemModel& sys, const Profile& initial, const Vector& x,
                              const GameConfig& cfg, int max_sweeps) {
  check_config(cfg);
  check_profile(sys, initial);
  if (max_sweeps < 1) throw std::invalid_argument("run_consensus: need at least one sweep");

  ConsensusResult result;
  result.profile = initial;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool moved = false;
    for (int i = 0; i < sys.num_subsystems(); ++i) {
      const double current = local_cost(sys, i, result.profile, x, cfg);
      Partition br = best_response(sys, i, result.profile, x, cfg);
      Profile trial = result.profile;
      trial.opinions[static_cast<std::size_t>(i)] = br;
      const double improved = local_cost(sys, i, trial, x, cfg);
      if (improved < current) {
        result.profile = std::move(trial);
        result.updates.push_back(ConsensusUpdate{i, canonical_key(br), improved,
                                                 potential(sys, result.profile, x, cfg)});
        moved = true;
      }
    }
    if (!moved) {
      result.converged = true;
      break;
    }
  }
  return result;
}

bool is_nash(const SystemModel& sys, const Profile& profile, const Vector& x,
             const GameConfig& cfg) {
  check_config(cfg);
  check_profile(sys, profile);
  const int M = sys.num_subsystems();
  if (M > 6) throw std::invalid_argument("is_nash: exhaustive check limited to 6 subsystems");
  const std::vector<Partition> all = enumerate_partitions(M);
  Profile trial = profile;
  for (int i = 0; i < M; ++i) {
    const double current = local_cost(sys, i, profile, x, cfg);
    for (const Partition& C : all) {
      trial.opinions[static_cast<std::size_t>(i)] = C;
      if (local_cost(sys, i, trial, x, cfg) < current - 1e-12) return false;
    }
    trial.opinions[static_cast<std::size_t>(i)] = profile.opinions[static_cast<std::size_t>(i)];
  }
  return true;
}

Partition induced_partition(const SystemModel& sys, const Profile& profile) {
  check_profile(sys, profile);
  const int M = sys.num_subsystems();
  // Union the links both endpoints want joined, then read off components.
  std::vector<int> root(static_cast<std::size_t>(M));
  for (int i = 0; i < M; ++i) root[static_cast<std::size_t>(i)] = i;
  const auto find = [&root](int a) {
    while (root[static_cast<std::size_t>(a)] != a) a = root[static_cast<std::size_t>(a)];
    return a;
  };
  for (int i = 0; i < M; ++i) {
    for (const int j : sys.symmetric_neighbors(i)) {
      if (j <= i) continue;
      if (delta_indicator(profile.opinions[static_cast<std::size_t>(i)], i, j) == 0 &&
          delta_indicator(profile.opinions[static_cast<std::size_t>(j)], i, j) == 0) {
        root[static_cast<std::size_t>(find(i))] = find(j);
      }
    }
  }
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < M; ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<int>> blocks;
  for (auto& [r, members] : groups) blocks.push_back(std::move(members));
  return Partition(std::move(blocks));
}

}  // namespace coalmpc

#pragma once

// Networks of linear subsystems coupled through their state matrices.
// Subsystem i evolves as
//
//   x_i+ = A_ii x_i + B_i u_i + sum_j A_ij x_j
//
// with box constraints on x_i and u_i and quadratic stage weights. A
// coalition is a group of subsystems controlled as one unit: couplings
// inside the group become part of its dynamics, couplings from outside
// act as a bounded disturbance.

#include <map>
#include <utility>
#include <vector>

#include "coalmpc/geometry.hpp"

namespace coalmpc {

struct SubsystemModel {
  Matrix A;  // n_i x n_i
  Matrix B;  // n_i x m_i
  SymBox state_box;
  SymBox input_box;
  Matrix Q;  // n_i x n_i stage weight
  Matrix R;  // m_i x m_i stage weight
};

class SystemModel {
 public:
  // Coupling blocks map (i, j) -> A_ij for i != j. Blocks whose Frobenius
  // norm is at most 1e-12 are treated as absent and dropped.
  SystemModel(std::vector<SubsystemModel> subsystems,
              std::map<std::pair<int, int>, Matrix> coupling);

  int num_subsystems() const { return static_cast<int>(subsystems_.size()); }
  const SubsystemModel& subsystem(int i) const;
  int state_dim(int i) const;
  int input_dim(int i) const;
  int total_state_dim() const;
  int total_input_dim() const;
  int state_offset(int i) const;
  int input_offset(int i) const;

  bool has_coupling(int i, int j) const;
  // Returns A_ij, or a zero block if the pair is uncoupled.
  Matrix coupling_block(int i, int j) const;
  const std::map<std::pair<int, int>, Matrix>& couplings() const { return coupling_; }

  // Subsystems whose state enters i's dynamics.
  std::vector<int> incoming_neighbors(int i) const;
  // Neighbors in either direction; the interaction graph of the game.
  std::vector<int> symmetric_neighbors(int i) const;

  Matrix assemble_state_matrix() const;
  Matrix assemble_input_matrix() const;

 private:
  void check_index(int i) const;

  std::vector<SubsystemModel> subsystems_;
  std::map<std::pair<int, int>, Matrix> coupling_;
  std::vector<int> state_offsets_, input_offsets_;
};

// A coalition's stacked model. Member order is ascending subsystem index;
// offsets locate each member inside the stacked state and input vectors.
struct CoalitionModel {
  std::vector<int> members;
  std::vector<int> member_state_offset;
  std::vector<int> member_input_offset;
  Matrix A;  // internal couplings included
  Matrix B;  // block diagonal
  SymBox state_box;
  SymBox input_box;
  Matrix Q;
  Matrix R;
  std::vector<int> external_neighbors;  // outside subsystems feeding in

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }
};

CoalitionModel build_coalition(const SystemModel& system, const std::vector<int>& members);

// Stacked map from an external neighbor's state into the coalition's
// dynamics: the A_id blocks of every member i listening to d, placed at the
// member state offsets. Zero rows for members that do not listen.
Matrix coalition_coupling(const SystemModel& system, const CoalitionModel& coalition,
                          int neighbor);

// The disturbance seen by a coalition: the Minkowski sum over external
// neighbors d of the stacked coupling image of X_d, with an optional
// per-subsystem scale factor (used for the planned-error layer, where the
// neighbor's deviation from its own plan is a known fraction of X_d).
Zonotope coalition_disturbance(const SystemModel& system, const CoalitionModel& coalition);
Zonotope coalition_disturbance(const SystemModel& system, const CoalitionModel& coalition,
                               const std::vector<double>& neighbor_scale);

enum class ZohMode {
  // Exponential of the full network matrix. Exact, but only representable
  // when the resulting input map stays block diagonal; otherwise rejected.
  ExactFull,
  // Per-subsystem exponential holding neighbor states like inputs over the
  // sample period. Keeps the input map block diagonal by construction and
  // preserves the coupling sparsity pattern.
  CoupledHold,
};

SystemModel discretize_zoh(const SystemModel& continuous, double sample_time, ZohMode mode);

// Smallest h with rank [B, AB, ..., A^{h-1}B] = n. Throws if the pair is
// not controllable.
int controllability_index(const Matrix& A, const Matrix& B);

}  // namespace coalmpc

#include "coalmpc/system.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace coalmpc {

namespace {
constexpr double kCouplingTol = 1e-12;
}

SystemModel::SystemModel(std::vector<SubsystemModel> subsystems,
                         std::map<std::pair<int, int>, Matrix> coupling)
    : subsystems_(std::move(subsystems)) {
  if (subsystems_.empty()) {
    throw std::invalid_argument("SystemModel: need at least one subsystem");
  }
  int sx = 0, su = 0;
  for (const auto& s : subsystems_) {
    if (s.A.rows() != s.A.cols() || s.A.rows() != s.B.rows()) {
      throw std::invalid_argument("SystemModel: inconsistent subsystem dimensions");
    }
    if (s.state_box.dim() != s.A.rows() || s.input_box.dim() != s.B.cols()) {
      throw std::invalid_argument("SystemModel: constraint box dimensions must match");
    }
    if (s.Q.rows() != s.A.rows() || s.Q.cols() != s.A.rows() ||
        s.R.rows() != s.B.cols() || s.R.cols() != s.B.cols()) {
      throw std::invalid_argument("SystemModel: weight dimensions must match");
    }
    state_offsets_.push_back(sx);
    input_offsets_.push_back(su);
    sx += static_cast<int>(s.A.rows());
    su += static_cast<int>(s.B.cols());
  }
  for (const auto& [key, block] : coupling) {
    const auto [i, j] = key;
    check_index(i);
    check_index(j);
    if (i == j) {
      throw std::invalid_argument("SystemModel: self coupling belongs in the A block");
    }
    if (block.rows() != state_dim(i) || block.cols() != state_dim(j)) {
      throw std::invalid_argument("SystemModel: coupling block dimensions must match");
    }
    if (block.norm() > kCouplingTol) coupling_.emplace(key, block);
  }
}

void SystemModel::check_index(int i) const {
  if (i < 0 || i >= num_subsystems()) {
    throw std::out_of_range("SystemModel: subsystem index out of range");
  }
}

const SubsystemModel& SystemModel::subsystem(int i) const {
  check_index(i);
  return subsystems_[static_cast<std::size_t>(i)];
}

int SystemModel::state_dim(int i) const { return static_cast<int>(subsystem(i).A.rows()); }
int SystemModel::input_dim(int i) const { return static_cast<int>(subsystem(i).B.cols()); }

int SystemModel::total_state_dim() const {
  return state_offsets_.back() + state_dim(num_subsystems() - 1);
}

int SystemModel::total_input_dim() const {
  return input_offsets_.back() + input_dim(num_subsystems() - 1);
}

int SystemModel::state_offset(int i) const {
  check_index(i);
  return state_offsets_[static_cast<std::size_t>(i)];
}

int SystemModel::input_offset(int i) const {
  check_index(i);
  return input_offsets_[static_cast<std::size_t>(i)];
}

bool SystemModel::has_coupling(int i, int j) const {
  check_index(i);
  check_index(j);
  return coupling_.count({i, j}) > 0;
}

Matrix SystemModel::coupling_block(int i, int j) const {
  check_index(i);
  check_index(j);
  const auto it = coupling_.find({i, j});
  if (it != coupling_.end()) return it->second;
  return Matrix::Zero(state_dim(i), state_dim(j));
}

std::vector<int> SystemModel::incoming_neighbors(int i) const {
  check_index(i);
  std::vector<int> out;
  for (int j = 0; j < num_subsystems(); ++j) {
    if (j != i && has_coupling(i, j)) out.push_back(j);
  }
  return out;
}

std::vector<int> SystemModel::symmetric_neighbors(int i) const {
  check_index(i);
  std::vector<int> out;
  for (int j = 0; j < num_subsystems(); ++j) {
    if (j != i && (has_coupling(i, j) || has_coupling(j, i))) out.push_back(j);
  }
  return out;
}

Matrix SystemModel::assemble_state_matrix() const {
  Matrix A = Matrix::Zero(total_state_dim(), total_state_dim());
  for (int i = 0; i < num_subsystems(); ++i) {
    A.block(state_offset(i), state_offset(i), state_dim(i), state_dim(i)) = subsystem(i).A;
  }
  for (const auto& [key, block] : coupling_) {
    A.block(state_offset(key.first), state_offset(key.second), block.rows(), block.cols()) =
        block;
  }
  return A;
}

Matrix SystemModel::assemble_input_matrix() const {
  Matrix B = Matrix::Zero(total_state_dim(), total_input_dim());
  for (int i = 0; i < num_subsystems(); ++i) {
    B.block(state_offset(i), input_offset(i), state_dim(i), input_dim(i)) = subsystem(i).B;
  }
  return B;
}

CoalitionModel build_coalition(const SystemModel& system, const std::vector<int>& members) {
  if (members.empty()) {
    throw std::invalid_argument("build_coalition: empty member list");
  }
  std::vector<int> sorted = members;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("build_coalition: duplicate member");
  }

  int nx = 0, nu = 0;
  std::vector<int> soff, uoff;
  for (const int i : sorted) {
    soff.push_back(nx);
    uoff.push_back(nu);
    nx += system.state_dim(i);
    nu += system.input_dim(i);
  }

  Matrix A = Matrix::Zero(nx, nx);
  Matrix B = Matrix::Zero(nx, nu);
  Matrix Q = Matrix::Zero(nx, nx);
  Matrix R = Matrix::Zero(nu, nu);
  Vector hx(nx), hu(nu);
  for (std::size_t a = 0; a < sorted.size(); ++a) {
    const auto& s = system.subsystem(sorted[a]);
    const int n_a = static_cast<int>(s.A.rows());
    const int m_a = static_cast<int>(s.B.cols());
    A.block(soff[a], soff[a], n_a, n_a) = s.A;
    B.block(soff[a], uoff[a], n_a, m_a) = s.B;
    Q.block(soff[a], soff[a], n_a, n_a) = s.Q;
    R.block(uoff[a], uoff[a], m_a, m_a) = s.R;
    hx.segment(soff[a], n_a) = s.state_box.halfwidths;
    hu.segment(uoff[a], m_a) = s.input_box.halfwidths;
    for (std::size_t b = 0; b < sorted.size(); ++b) {
      if (a != b && system.has_coupling(sorted[a], sorted[b])) {
        A.block(soff[a], soff[b], n_a, system.state_dim(sorted[b])) =
            system.coupling_block(sorted[a], sorted[b]);
      }
    }
  }

  std::set<int> externals;
  for (const int i : sorted) {
    for (const int j : system.incoming_neighbors(i)) {
      if (!std::binary_search(sorted.begin(), sorted.end(), j)) externals.insert(j);
    }
  }

  return CoalitionModel{sorted,
                        std::move(soff),
                        std::move(uoff),
                        std::move(A),
                        std::move(B),
                        SymBox(std::move(hx)),
                        SymBox(std::move(hu)),
                        std::move(Q),
                        std::move(R),
                        std::vector<int>(externals.begin(), externals.end())};
}

Zonotope coalition_disturbance(const SystemModel& system, const CoalitionModel& coalition) {
  return coalition_disturbance(
      system, coalition, std::vector<double>(static_cast<std::size_t>(system.num_subsystems()), 1.0));
}

Matrix coalition_coupling(const SystemModel& system, const CoalitionModel& coalition,
                          int neighbor) {
  Matrix L = Matrix::Zero(coalition.state_dim(), system.state_dim(neighbor));
  for (std::size_t a = 0; a < coalition.members.size(); ++a) {
    const int i = coalition.members[a];
    if (system.has_coupling(i, neighbor)) {
      L.block(coalition.member_state_offset[a], 0, system.state_dim(i),
              system.state_dim(neighbor)) = system.coupling_block(i, neighbor);
    }
  }
  return L;
}

Zonotope coalition_disturbance(const SystemModel& system, const CoalitionModel& coalition,
                               const std::vector<double>& neighbor_scale) {
  if (neighbor_scale.size() != static_cast<std::size_t>(system.num_subsystems())) {
    throw std::invalid_argument("coalition_disturbance: one scale per subsystem required");
  }
  const int nx = coalition.state_dim();
  Zonotope W = Zonotope::origin(nx);
  for (const int d : coalition.external_neighbors) {
    const double scale = neighbor_scale[static_cast<std::size_t>(d)];
    if (scale < 0.0) {
      throw std::invalid_argument("coalition_disturbance: negative scale");
    }
    if (scale == 0.0) continue;
    const Matrix L = coalition_coupling(system, coalition, d);
    const Zonotope Xd = Zonotope::from_box(system.subsystem(d).state_box);
    W = minkowski_sum(W, linear_image(scale * L, Xd));
  }
  return W;
}

SystemModel discretize_zoh(const SystemModel& continuous, double sample_time, ZohMode mode) {
  if (!(sample_time > 0.0)) {
    throw std::invalid_argument("discretize_zoh: sample time must be positive");
  }
  const int M = continuous.num_subsystems();
  std::vector<SubsystemModel> subs;
  std::map<std::pair<int, int>, Matrix> coupling;

  if (mode == ZohMode::ExactFull) {
    const int nx = continuous.total_state_dim();
    const int nu = continuous.total_input_dim();
    Matrix aug = Matrix::Zero(nx + nu, nx + nu);
    aug.topLeftCorner(nx, nx) = continuous.assemble_state_matrix();
    aug.topRightCorner(nx, nu) = continuous.assemble_input_matrix();
    const Matrix exp_aug = (aug * sample_time).exp();
    const Matrix Ad = exp_aug.topLeftCorner(nx, nx);
    const Matrix Bd = exp_aug.topRightCorner(nx, nu);

    for (int i = 0; i < M; ++i) {
      for (int j = 0; j < M; ++j) {
        if (i == j) continue;
        const Matrix cross = Bd.block(continuous.state_offset(i), continuous.input_offset(j),
                                      continuous.state_dim(i), continuous.input_dim(j));
        if (cross.norm() > 1e-9) {
          throw std::invalid_argument(
              "discretize_zoh: exact discretization couples input " + std::to_string(j) +
              " into subsystem " + std::to_string(i) +
              "; use the coupled-hold mode for interconnected networks");
        }
      }
    }
    for (int i = 0; i < M; ++i) {
      const auto& s = continuous.subsystem(i);
      SubsystemModel d{Ad.block(continuous.state_offset(i), continuous.state_offset(i),
                                continuous.state_dim(i), continuous.state_dim(i)),
                       Bd.block(continuous.state_offset(i), continuous.input_offset(i),
                                continuous.state_dim(i), continuous.input_dim(i)),
                       s.state_box, s.input_box, s.Q, s.R};
      subs.push_back(std::move(d));
      for (int j = 0; j < M; ++j) {
        if (i == j) continue;
        Matrix block = Ad.block(continuous.state_offset(i), continuous.state_offset(j),
                                continuous.state_dim(i), continuous.state_dim(j));
        if (block.norm() > kCouplingTol) coupling.emplace(std::make_pair(i, j), std::move(block));
      }
    }
    return SystemModel(std::move(subs), std::move(coupling));
  }

  // Coupled hold: treat neighbor states like held inputs over the sample
  // period. One exponential per subsystem, of [[A_ii, (A_ij..., B_i)]; 0].
  for (int i = 0; i < M; ++i) {
    const auto& s = continuous.subsystem(i);
    const int n_i = continuous.state_dim(i);
    const int m_i = continuous.input_dim(i);
    const auto neighbors = continuous.incoming_neighbors(i);
    int held = m_i;
    for (const int j : neighbors) held += continuous.state_dim(j);

    Matrix aug = Matrix::Zero(n_i + held, n_i + held);
    aug.topLeftCorner(n_i, n_i) = s.A;
    int col = n_i;
    for (const int j : neighbors) {
      aug.block(0, col, n_i, continuous.state_dim(j)) = continuous.coupling_block(i, j);
      col += continuous.state_dim(j);
    }
    aug.block(0, col, n_i, m_i) = s.B;

    const Matrix exp_aug = (aug * sample_time).exp();
    SubsystemModel d{exp_aug.topLeftCorner(n_i, n_i), exp_aug.block(0, col, n_i, m_i),
                     s.state_box, s.input_box, s.Q, s.R};
    subs.push_back(std::move(d));
    col = n_i;
    for (const int j : neighbors) {
      Matrix block = exp_aug.block(0, col, n_i, continuous.state_dim(j));
      if (block.norm() > kCouplingTol) coupling.emplace(std::make_pair(i, j), std::move(block));
      col += continuous.state_dim(j);
    }
  }
  return SystemModel(std::move(subs), std::move(coupling));
}

int controllability_index(const Matrix& A, const Matrix& B) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n || B.rows() != n || B.cols() < 1) {
    throw std::invalid_argument("controllability_index: dimension mismatch");
  }
  const int m = static_cast<int>(B.cols());
  Matrix K(n, n * m);
  Matrix power = B;
  for (int h = 1; h <= n; ++h) {
    K.middleCols((h - 1) * m, m) = power;
    Eigen::ColPivHouseholderQR<Matrix> qr(K.leftCols(h * m));
    qr.setThreshold(1e-9);
    if (qr.rank() == n) return h;
    power = A * power;
  }
  throw std::invalid_argument("controllability_index: pair is not controllable");
}

}  // namespace coalmpc

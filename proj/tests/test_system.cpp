#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "coalmpc/system.hpp"
#include "models.hpp"

using namespace coalmpc;
using coalmpc::testing::four_mass_continuous;
using coalmpc::testing::three_scalar_system;

namespace {

// Independent matrix exponential: scaling and squaring around a plain
// Taylor series. Slower than the library routine but implemented on
// entirely different lines, which is the point.
Matrix taylor_exp(const Matrix& M) {
  int squarings = 0;
  double norm = M.cwiseAbs().rowwise().sum().maxCoeff();
  while (norm > 0.5) {
    norm /= 2.0;
    ++squarings;
  }
  const Matrix X = M / std::pow(2.0, squarings);
  Matrix term = Matrix::Identity(M.rows(), M.cols());
  Matrix sum = term;
  for (int k = 1; k <= 30; ++k) {
    term = term * X / static_cast<double>(k);
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

}  // namespace

TEST_CASE("three-scalar network structure") {
  const SystemModel sys = three_scalar_system();
  CHECK(sys.num_subsystems() == 3);
  CHECK(sys.total_state_dim() == 3);
  CHECK(sys.incoming_neighbors(0) == std::vector<int>{1});
  CHECK(sys.incoming_neighbors(1).empty());
  CHECK(sys.incoming_neighbors(2) == std::vector<int>{0});
  // The interaction graph ignores direction.
  CHECK(sys.symmetric_neighbors(0) == std::vector<int>{1, 2});
  CHECK(sys.symmetric_neighbors(1) == std::vector<int>{0});
  CHECK(sys.symmetric_neighbors(2) == std::vector<int>{0});

  SUBCASE("pairing the coupled subsystems closes the loop") {
    const CoalitionModel c = build_coalition(sys, {0, 1});
    CHECK(c.A == (Matrix(2, 2) << 0.6, 0.1, 0.0, 0.6).finished());
    CHECK(c.B == Matrix::Identity(2, 2));
    CHECK(c.external_neighbors.empty());
    const Zonotope W = coalition_disturbance(sys, c);
    CHECK(W.num_generators() == 0);
  }

  SUBCASE("singleton coalitions see their neighbors as disturbance") {
    const CoalitionModel c0 = build_coalition(sys, {0});
    CHECK(c0.external_neighbors == std::vector<int>{1});
    const Zonotope W0 = coalition_disturbance(sys, c0);
    CHECK(support(W0, Vector::Ones(1)) == doctest::Approx(0.2).epsilon(1e-14));

    const CoalitionModel c1 = build_coalition(sys, {1});
    CHECK(coalition_disturbance(sys, c1).num_generators() == 0);

    const CoalitionModel c2 = build_coalition(sys, {2});
    CHECK(c2.external_neighbors == std::vector<int>{0});
    CHECK(support(coalition_disturbance(sys, c2), Vector::Ones(1)) ==
          doctest::Approx(0.2).epsilon(1e-14));
  }

  SUBCASE("neighbor scaling shrinks the disturbance") {
    const CoalitionModel c0 = build_coalition(sys, {0});
    std::vector<double> scale = {1.0, 0.1, 1.0};
    const Zonotope W = coalition_disturbance(sys, c0, scale);
    CHECK(support(W, Vector::Ones(1)) == doctest::Approx(0.02).epsilon(1e-14));
    scale[1] = 0.0;
    CHECK(coalition_disturbance(sys, c0, scale).num_generators() == 0);
    scale[1] = -0.5;
    CHECK_THROWS_AS(coalition_disturbance(sys, c0, scale), std::invalid_argument);
  }
}

TEST_CASE("four-mass chain assembly") {
  const SystemModel sys = four_mass_continuous();
  const Matrix A = sys.assemble_state_matrix();
  REQUIRE(A.rows() == 8);

  // Mass 1: k12/m1 = 0.5/3, c12/m1 = 0.2/3 appear both on the diagonal
  // block (with a minus) and in the coupling to mass 2.
  CHECK(A(1, 0) == doctest::Approx(-0.5 / 3.0).epsilon(1e-15));
  CHECK(A(1, 1) == doctest::Approx(-0.2 / 3.0).epsilon(1e-15));
  CHECK(A(1, 2) == doctest::Approx(0.5 / 3.0).epsilon(1e-15));
  CHECK(A(1, 3) == doctest::Approx(0.2 / 3.0).epsilon(1e-15));
  // Mass 2 couples to both 1 and 3: diagonal uses the sum.
  CHECK(A(3, 2) == doctest::Approx(-(0.5 + 0.75) / 2.0).epsilon(1e-15));
  CHECK(A(3, 3) == doctest::Approx(-(0.2 + 0.25) / 2.0).epsilon(1e-15));
  CHECK(A(3, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(A(3, 1) == doctest::Approx(0.1).epsilon(1e-15));
  // Masses 1 and 3 share no spring.
  CHECK(A.block(0, 4, 2, 2).norm() == 0.0);
  CHECK(sys.has_coupling(0, 1));
  CHECK_FALSE(sys.has_coupling(0, 2));

  const Matrix B = sys.assemble_input_matrix();
  CHECK(B(1, 0) == 100.0);
  CHECK(B(3, 1) == 100.0);
  CHECK(B(1, 1) == 0.0);
}

TEST_CASE("coalition dynamics agree with the assembled network") {
  const SystemModel sys = discretize_zoh(four_mass_continuous(), 0.1, ZohMode::CoupledHold);
  const Matrix A = sys.assemble_state_matrix();
  const Matrix B = sys.assemble_input_matrix();
  const CoalitionModel c = build_coalition(sys, {0, 1});
  CHECK(c.external_neighbors == std::vector<int>{2});

  std::mt19937 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = Vector::NullaryExpr(8, [&](int) { return gauss(rng); });
    const Vector u = Vector::NullaryExpr(4, [&](int) { return gauss(rng); });
    const Vector full_next = A * x + B * u;

    Vector coalition_next = c.A * x.head(4) + c.B * u.head(2);
    // External influence of mass 3 on member 1 (row offset 2 in the stack).
    coalition_next.segment(2, 2) += sys.coupling_block(1, 2) * x.segment(4, 2);
    CHECK((coalition_next - full_next.head(4)).lpNorm<Eigen::Infinity>() <= 1e-13);
  }
}

TEST_CASE("coupled-hold discretization matches an independent exponential") {
  const SystemModel cont = four_mass_continuous();
  const double Ts = 0.1;
  const SystemModel disc = discretize_zoh(cont, Ts, ZohMode::CoupledHold);

  for (int i = 0; i < 4; ++i) {
    const auto neighbors = cont.incoming_neighbors(i);
    int held = cont.input_dim(i);
    for (const int j : neighbors) held += cont.state_dim(j);
    Matrix aug = Matrix::Zero(2 + held, 2 + held);
    aug.topLeftCorner(2, 2) = cont.subsystem(i).A;
    int col = 2;
    for (const int j : neighbors) {
      aug.block(0, col, 2, 2) = cont.coupling_block(i, j);
      col += 2;
    }
    aug.block(0, col, 2, 1) = cont.subsystem(i).B;

    const Matrix ref = taylor_exp(aug * Ts);
    CHECK((disc.subsystem(i).A - ref.topLeftCorner(2, 2)).lpNorm<Eigen::Infinity>() <= 1e-10);
    CHECK((disc.subsystem(i).B - ref.block(0, col, 2, 1)).lpNorm<Eigen::Infinity>() <= 1e-10);
    col = 2;
    for (const int j : neighbors) {
      CHECK((disc.coupling_block(i, j) - ref.block(0, col, 2, 2)).lpNorm<Eigen::Infinity>() <=
            1e-10);
      col += 2;
    }
  }

  // Sanity: each discrete diagonal block is close to I + Ts*A for small Ts.
  CHECK((disc.subsystem(0).A - Matrix::Identity(2, 2) - Ts * cont.subsystem(0).A).norm() < 0.01);
}

TEST_CASE("exact discretization applies only to input-decoupled networks") {
  const SystemModel cont = four_mass_continuous();
  CHECK_THROWS_AS(discretize_zoh(cont, 0.1, ZohMode::ExactFull), std::invalid_argument);
  CHECK_THROWS_AS(discretize_zoh(cont, 0.0, ZohMode::CoupledHold), std::invalid_argument);

  // With the couplings removed the two modes agree exactly.
  std::vector<SubsystemModel> subs;
  for (int i = 0; i < 4; ++i) subs.push_back(cont.subsystem(i));
  const SystemModel decoupled(std::move(subs), {});
  const SystemModel ex = discretize_zoh(decoupled, 0.1, ZohMode::ExactFull);
  const SystemModel ch = discretize_zoh(decoupled, 0.1, ZohMode::CoupledHold);
  for (int i = 0; i < 4; ++i) {
    CHECK((ex.subsystem(i).A - ch.subsystem(i).A).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK((ex.subsystem(i).B - ch.subsystem(i).B).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
  CHECK(ex.couplings().empty());
}

TEST_CASE("disturbance sets shrink as coalitions grow") {
  const SystemModel sys = discretize_zoh(four_mass_continuous(), 0.1, ZohMode::CoupledHold);
  const std::vector<std::vector<int>> chain = {{0}, {0, 1}, {0, 1, 2}, {0, 1, 2, 3}};
  double prev0 = -1.0, prev1 = -1.0;
  for (const auto& members : chain) {
    const CoalitionModel c = build_coalition(sys, members);
    const Zonotope W = coalition_disturbance(sys, c);
    Vector e0 = Vector::Zero(c.state_dim());
    e0[0] = 1.0;
    Vector e1 = Vector::Zero(c.state_dim());
    e1[1] = 1.0;
    const double s0 = support(W, e0);
    const double s1 = support(W, e1);
    if (prev0 >= 0.0) {
      CHECK(s0 <= prev0 + 1e-14);
      CHECK(s1 <= prev1 + 1e-14);
    }
    prev0 = s0;
    prev1 = s1;
  }
  // The full coalition has nothing outside it.
  CHECK(coalition_disturbance(sys, build_coalition(sys, {0, 1, 2, 3})).num_generators() == 0);
}

TEST_CASE("controllability indices") {
  const SystemModel scalar = three_scalar_system();
  CHECK(controllability_index(scalar.subsystem(0).A, scalar.subsystem(0).B) == 1);

  const SystemModel disc = discretize_zoh(four_mass_continuous(), 0.1, ZohMode::CoupledHold);
  for (int i = 0; i < 4; ++i) {
    CHECK(controllability_index(disc.subsystem(i).A, disc.subsystem(i).B) == 2);
  }
  const CoalitionModel all = build_coalition(disc, {0, 1, 2, 3});
  CHECK(controllability_index(all.A, all.B) == 2);
  const CoalitionModel pair = build_coalition(disc, {2, 3});
  CHECK(controllability_index(pair.A, pair.B) == 2);

  CHECK_THROWS_AS(controllability_index(Matrix::Identity(2, 2), (Matrix(2, 1) << 1, 0).finished()),
                  std::invalid_argument);
}

TEST_CASE("construction validation") {
  const SystemModel sys = three_scalar_system();
  std::vector<SubsystemModel> subs = {sys.subsystem(0), sys.subsystem(1)};

  std::map<std::pair<int, int>, Matrix> bad_dim;
  bad_dim[{0, 1}] = Matrix::Zero(2, 1);
  CHECK_THROWS_AS(SystemModel(std::vector<SubsystemModel>(subs), bad_dim), std::invalid_argument);

  std::map<std::pair<int, int>, Matrix> self;
  self[{0, 0}] = Matrix::Identity(1, 1);
  CHECK_THROWS_AS(SystemModel(std::vector<SubsystemModel>(subs), self), std::invalid_argument);

  // Couplings below the structural tolerance are dropped.
  std::map<std::pair<int, int>, Matrix> tiny;
  tiny[{0, 1}] = (Matrix(1, 1) << 1e-13).finished();
  const SystemModel pruned(std::vector<SubsystemModel>(subs), tiny);
  CHECK_FALSE(pruned.has_coupling(0, 1));

  CHECK_THROWS_AS(build_coalition(sys, {}), std::invalid_argument);
  CHECK_THROWS_AS(build_coalition(sys, {0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(build_coalition(sys, {0, 5}), std::out_of_range);
}

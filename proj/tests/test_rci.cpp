#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <utility>

#include "coalmpc/rci.hpp"
#include "models.hpp"

using namespace coalmpc;
using coalmpc::testing::four_mass_continuous;
using coalmpc::testing::three_scalar_system;

namespace {

SystemModel four_mass_discrete() {
  return discretize_zoh(four_mass_continuous(), 0.1, ZohMode::CoupledHold);
}

Zonotope interval(double halfwidth) {
  return Zonotope(1, (Matrix(1, 1) << halfwidth).finished());
}

// Support of a coalition's error set along one subsystem state axis.
double axis_support(const CoalitionDesign& d, int subsystem, int axis) {
  const auto& members = d.model.members;
  for (std::size_t a = 0; a < members.size(); ++a) {
    if (members[a] == subsystem) {
      Vector e = Vector::Zero(d.model.state_dim());
      e[d.model.member_state_offset[a] + axis] = 1.0;
      return rci_support(d, e);
    }
  }
  throw std::logic_error("subsystem not in coalition");
}

}  // namespace

TEST_CASE("error-propagation matrices satisfy the one-step recursion") {
  std::mt19937 rng(31);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Matrix A = Matrix::NullaryExpr(3, 3, [&](int, int) { return gauss(rng); });
  const Matrix B = Matrix::NullaryExpr(3, 2, [&](int, int) { return gauss(rng); });
  std::vector<Matrix> M;
  for (int l = 0; l < 3; ++l) {
    M.push_back(Matrix::NullaryExpr(2, 3, [&](int, int) { return gauss(rng); }));
  }
  const auto D = d_matrices(A, B, M);
  REQUIRE(D.size() == 4);
  CHECK(D[0] == Matrix::Identity(3, 3));
  for (int l = 0; l < 3; ++l) {
    const Matrix expect = A * D[static_cast<std::size_t>(l)] + B * M[static_cast<std::size_t>(l)];
    CHECK((D[static_cast<std::size_t>(l + 1)] - expect).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("scalar design has a closed form") {
  // x+ = 0.6x + u with |x| <= 2, |u| <= 0.5, |w| <= 0.2. One tap kills the
  // error (M0 = -A), the error set is W itself, and the feedback set is
  // 0.6 * W: eta = 0.2/2, theta = 0.12/0.5.
  const auto params = solve_rci_lp((Matrix(1, 1) << 0.6).finished(),
                                   (Matrix(1, 1) << 1.0).finished(),
                                   SymBox((Vector(1) << 2.0).finished()),
                                   SymBox((Vector(1) << 0.5).finished()), interval(0.2), 1);
  REQUIRE(params.has_value());
  CHECK(params->eta == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(params->theta == doctest::Approx(0.24).epsilon(1e-6));
  CHECK(params->delta == doctest::Approx(0.34).epsilon(1e-6));
  CHECK(params->M[0](0, 0) == doctest::Approx(-0.6).epsilon(1e-6));

  SUBCASE("objective weights reprice the same forced gains") {
    const auto weighted = solve_rci_lp((Matrix(1, 1) << 0.6).finished(),
                                       (Matrix(1, 1) << 1.0).finished(),
                                       SymBox((Vector(1) << 2.0).finished()),
                                       SymBox((Vector(1) << 0.5).finished()), interval(0.2), 1,
                                       2.0, 1.0);
    REQUIRE(weighted.has_value());
    CHECK(weighted->eta == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(weighted->theta == doctest::Approx(0.24).epsilon(1e-6));
    CHECK(weighted->delta == doctest::Approx(0.44).epsilon(1e-6));
  }

  SUBCASE("a spare tap buys a cheaper tradeoff") {
    // With two taps the gains are no longer forced: waiting one step lets
    // the stable mode shrink the error before cancelling it, trading error
    // size for input effort. Minimizing 0.34|0.6 + M0| + 0.4|M0| + 0.1
    // over M0 gives M0 = 0, M1 = -0.36.
    const auto wide = solve_rci_lp((Matrix(1, 1) << 0.6).finished(),
                                   (Matrix(1, 1) << 1.0).finished(),
                                   SymBox((Vector(1) << 2.0).finished()),
                                   SymBox((Vector(1) << 0.5).finished()), interval(0.2), 2);
    REQUIRE(wide.has_value());
    CHECK(wide->eta == doctest::Approx(0.16).epsilon(1e-6));
    CHECK(wide->theta == doctest::Approx(0.144).epsilon(1e-6));
    CHECK(wide->delta == doctest::Approx(0.304).epsilon(1e-6));
    CHECK(wide->delta <= params->delta + 1e-9);
  }

  SUBCASE("scalings are monotone in the disturbance") {
    const auto smaller = solve_rci_lp((Matrix(1, 1) << 0.6).finished(),
                                      (Matrix(1, 1) << 1.0).finished(),
                                      SymBox((Vector(1) << 2.0).finished()),
                                      SymBox((Vector(1) << 0.5).finished()), interval(0.1), 1);
    REQUIRE(smaller.has_value());
    CHECK(smaller->eta == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(smaller->theta == doctest::Approx(0.12).epsilon(1e-6));
    CHECK(smaller->eta <= params->eta + 1e-9);
  }

  SUBCASE("oversized disturbances are rejected") {
    CHECK_FALSE(solve_rci_lp((Matrix(1, 1) << 0.6).finished(),
                             (Matrix(1, 1) << 1.0).finished(),
                             SymBox((Vector(1) << 2.0).finished()),
                             SymBox((Vector(1) << 0.5).finished()), interval(3.0), 1)
                    .has_value());
  }

  SUBCASE("zero disturbance needs no budget") {
    const auto trivial = solve_rci_lp((Matrix(1, 1) << 0.6).finished(),
                                      (Matrix(1, 1) << 1.0).finished(),
                                      SymBox((Vector(1) << 2.0).finished()),
                                      SymBox((Vector(1) << 0.5).finished()),
                                      Zonotope::origin(1), 1);
    REQUIRE(trivial.has_value());
    CHECK(trivial->eta == doctest::Approx(0.0));
    CHECK(trivial->theta == doctest::Approx(0.0));
  }
}

TEST_CASE("explicit error and feedback sets match the scalings") {
  const Matrix A = (Matrix(1, 1) << 0.6).finished();
  const Matrix B = (Matrix(1, 1) << 1.0).finished();
  const SymBox X((Vector(1) << 2.0).finished());
  const SymBox U((Vector(1) << 0.5).finished());
  const auto params = solve_rci_lp(A, B, X, U, interval(0.2), 1);
  REQUIRE(params.has_value());
  const Zonotope E = rci_error_set(*params, interval(0.2));
  const Zonotope F = rci_feedback_set(*params, interval(0.2));
  CHECK(support(E, Vector::Ones(1)) == doctest::Approx(params->eta * 2.0).epsilon(1e-9));
  CHECK(support(F, Vector::Ones(1)) == doctest::Approx(params->theta * 0.5).epsilon(1e-9));
  CHECK(contained_in_scaled_box(E, X, params->eta + 1e-12));
  CHECK(contained_in_scaled_box(F, U, params->theta + 1e-12));
}

TEST_CASE("two-tap designs are pinned by the square feedback system") {
  // With as many gain entries as nilpotency equations ([AB B] square and
  // invertible), the gains are forced and the LP only prices them.
  const SystemModel sys = four_mass_discrete();
  const Partition p = Partition::from_key("0011");
  const PartitionDesign design = design_partition(sys, p);
  REQUIRE(design.coalitions.size() == 2);

  for (const auto& d : design.coalitions) {
    const Matrix& A = d.model.A;
    const Matrix& B = d.model.B;
    REQUIRE(d.full_uncertainty.horizon == 2);
    Matrix stacked(4, 4);
    stacked.topRows(2) = d.full_uncertainty.M[0];
    stacked.bottomRows(2) = d.full_uncertainty.M[1];
    Matrix pencil(4, 4);
    pencil.leftCols(2) = A * B;
    pencil.rightCols(2) = B;
    const Matrix forced = -pencil.inverse() * (A * A);
    CHECK((stacked - forced).lpNorm<Eigen::Infinity>() <= 1e-8);
    // Same gains for the residual design: they do not depend on the set.
    Matrix stacked_res(4, 4);
    stacked_res.topRows(2) = d.residual.M[0];
    stacked_res.bottomRows(2) = d.residual.M[1];
    CHECK((stacked_res - forced).lpNorm<Eigen::Infinity>() <= 1e-8);
  }
}

TEST_CASE("three-scalar decentralized design chain") {
  const SystemModel sys = three_scalar_system();
  const PartitionDesign design = design_partition(sys, Partition::decentralized(3));
  REQUIRE(design.coalitions.size() == 3);

  const auto& d0 = design.coalitions[0];
  CHECK(d0.alpha_x == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(d0.alpha_u == doctest::Approx(0.76).epsilon(1e-9));

  // Subsystem 1 hears nobody: full budget to the nominal layer.
  const auto& d1 = design.coalitions[1];
  CHECK(d1.alpha_x == doctest::Approx(1.0));
  CHECK(d1.alpha_u == doctest::Approx(1.0));
  CHECK(d1.beta_x == doctest::Approx(0.0));
  CHECK(d1.xi_x == doctest::Approx(0.0));

  // Subsystem 2 hears subsystem 0, whose nominal share is 0.9, so the
  // residual disturbance is 0.1 * 0.1 * X_0 = [-0.02, 0.02].
  const auto& d2 = design.coalitions[2];
  CHECK(d2.alpha_x == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(d2.alpha_u == doctest::Approx(0.76).epsilon(1e-9));
  CHECK(support(d2.W_hat, Vector::Ones(1)) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(d2.xi_x == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(d2.xi_u == doctest::Approx(0.024).epsilon(1e-9));
  CHECK(d2.beta_x == doctest::Approx(0.09).epsilon(1e-9));
  CHECK(d2.beta_u == doctest::Approx(0.216).epsilon(1e-9));
  // The three shares exhaust the box on both sides.
  CHECK(d2.alpha_x + d2.beta_x + d2.xi_x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d2.alpha_u + d2.beta_u + d2.xi_u == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pairing the coupled scalars frees the whole budget") {
  const SystemModel sys = three_scalar_system();
  const PartitionDesign design = design_partition(sys, Partition::from_key("001"));
  const auto& dpair = design.coalitions[0];
  CHECK(dpair.alpha_x == doctest::Approx(1.0));
  CHECK(dpair.alpha_u == doctest::Approx(1.0));

  // Subsystem 2 still hears subsystem 0, but that coalition's nominal share
  // is now 1, so the residual layer vanishes and beta takes everything.
  const auto& d2 = design.coalitions[1];
  CHECK(d2.alpha_x == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(d2.W_hat.num_generators() == 0);
  CHECK(d2.xi_x == doctest::Approx(0.0));
  CHECK(d2.beta_x == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(d2.beta_u == doctest::Approx(0.24).epsilon(1e-9));
}

TEST_CASE("every mass-chain partition designs at the shipped sampling time") {
  const SystemModel sys = four_mass_discrete();
  for (const auto& p : enumerate_partitions(4)) {
    CAPTURE(canonical_key(p));
    CHECK_NOTHROW(design_partition(sys, p));
  }
}

TEST_CASE("grouping uncoupled masses separates into singleton designs") {
  // Masses 1 and 3 share no spring, so the coalition {1,3} splits into two
  // independent single-mass designs: its scalings are the max of theirs.
  // This is why such groupings are never harder to design than the fully
  // split partition.
  const SystemModel sys = four_mass_discrete();
  const PartitionDesign mixed = design_partition(sys, Partition::from_key("0101"));
  const PartitionDesign dec = design_partition(sys, Partition::decentralized(4));
  for (const auto& c : mixed.coalitions) {
    REQUIRE(c.model.members.size() == 2);
    double eta_max = 0.0;
    double theta_max = 0.0;
    for (int mem : c.model.members) {
      eta_max = std::max(eta_max, dec.coalitions[static_cast<std::size_t>(mem)].full_uncertainty.eta);
      theta_max =
          std::max(theta_max, dec.coalitions[static_cast<std::size_t>(mem)].full_uncertainty.theta);
    }
    CHECK(c.full_uncertainty.eta == doctest::Approx(eta_max).epsilon(1e-6));
    CHECK(c.full_uncertainty.theta == doctest::Approx(theta_max).epsilon(1e-6));
  }
}

TEST_CASE("overwhelming coupling fails the design at the first stage") {
  // A scalar chain whose neighbor influence exceeds the input budget:
  // killing an error of size 0.5 * 2 needs |u| = 0.6 * 1.0 > 0.5.
  std::vector<SubsystemModel> subs;
  for (int i = 0; i < 2; ++i) {
    subs.push_back(SubsystemModel{(Matrix(1, 1) << 0.6).finished(),
                                  (Matrix(1, 1) << 1.0).finished(),
                                  SymBox((Vector(1) << 2.0).finished()),
                                  SymBox((Vector(1) << 0.5).finished()),
                                  (Matrix(1, 1) << 1.0).finished(),
                                  (Matrix(1, 1) << 1.0).finished()});
  }
  std::map<std::pair<int, int>, Matrix> couplings;
  couplings[{0, 1}] = (Matrix(1, 1) << 0.5).finished();
  const SystemModel heavy(subs, couplings);
  try {
    design_partition(heavy, Partition::decentralized(2));
    FAIL("expected a design failure");
  } catch (const PartitionDesignError& e) {
    CHECK(e.block == 0);
    CHECK(e.stage == 1);
  }
  // Pairing the two removes the disturbance entirely.
  CHECK_NOTHROW(design_partition(heavy, Partition::centralized(2)));
}

TEST_CASE("error sets of nested partitions nest per axis") {
  const SystemModel sys = three_scalar_system();
  const auto partitions = enumerate_partitions(3);
  std::vector<PartitionDesign> designs;
  for (const auto& p : partitions) designs.push_back(design_partition(sys, p));

  for (std::size_t a = 0; a < partitions.size(); ++a) {
    for (std::size_t b = 0; b < partitions.size(); ++b) {
      if (a == b || !refines(partitions[a], partitions[b])) continue;
      // partitions[a] finer, partitions[b] coarser: merging can only
      // remove disturbance sources, never add them.
      for (int i = 0; i < 3; ++i) {
        const auto block_of = [i](const PartitionDesign& d) -> const CoalitionDesign& {
          for (const auto& c : d.coalitions) {
            for (int mem : c.model.members) {
              if (mem == i) return c;
            }
          }
          throw std::logic_error("uncovered subsystem");
        };
        const double fine = axis_support(block_of(designs[a]), i, 0);
        const double coarse = axis_support(block_of(designs[b]), i, 0);
        CHECK(coarse <= fine + 1e-8);
      }
    }
  }
}

TEST_CASE("minimal selection decomposes errors into disturbance history") {
  // Standalone single-tap design: one generator of width 0.2, gain -0.6.
  const SystemModel sys = three_scalar_system();
  CoalitionDesign d{build_coalition(sys, {0}),
                    interval(0.2),
                    RciParameterization{1,
                                        {(Matrix(1, 1) << -0.6).finished()},
                                        {Matrix::Identity(1, 1)},
                                        0.1,
                                        0.24},
                    interval(0.2),
                    RciParameterization{1,
                                        {(Matrix(1, 1) << -0.6).finished()},
                                        {Matrix::Identity(1, 1)},
                                        0.1,
                                        0.24},
                    0.9,
                    0.76,
                    0.0,
                    0.0,
                    0.1,
                    0.24};

  SUBCASE("interior error") {
    const auto sel = minimal_selection_control(d, (Vector(1) << 0.1).finished());
    CHECK(sel.lambda_star == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(sel.within_tube);
    REQUIRE(sel.w.size() == 1);
    CHECK(sel.w[0][0] == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(sel.feedback[0] == doctest::Approx(-0.06).epsilon(1e-9));
  }

  SUBCASE("an error beyond the set is flagged but still served") {
    const auto sel = minimal_selection_control(d, (Vector(1) << 0.3).finished());
    CHECK(sel.lambda_star == doctest::Approx(1.5).epsilon(1e-9));
    CHECK_FALSE(sel.within_tube);
    CHECK(sel.feedback[0] == doctest::Approx(-0.18).epsilon(1e-9));
  }

  SUBCASE("zero error selects nothing") {
    const auto sel = minimal_selection_control(d, Vector::Zero(1));
    CHECK(sel.lambda_star == doctest::Approx(0.0));
    CHECK(sel.feedback[0] == doctest::Approx(0.0));
  }
}

TEST_CASE("selection with a degenerate disturbance set") {
  const SystemModel sys = three_scalar_system();
  const PartitionDesign design = design_partition(sys, Partition::from_key("001"));
  const auto& dpair = design.coalitions[0];  // no residual uncertainty at all
  REQUIRE(dpair.W_hat.num_generators() == 0);
  const auto sel = minimal_selection_control(dpair, Vector::Zero(2));
  CHECK(sel.feedback.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(sel.lambda_star == 0.0);
  CHECK_THROWS_AS(minimal_selection_control(dpair, (Vector(2) << 0.1, 0.0).finished()),
                  OutOfTubeError);
}

TEST_CASE("selection keeps the residual set invariant") {
  const SystemModel sys = four_mass_discrete();
  const PartitionDesign design = design_partition(sys, Partition::from_key("0011"));
  const auto& d = design.coalitions[0];
  const int h = d.residual.horizon;
  const int g = d.W_hat.num_generators();
  REQUIRE(g > 0);

  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    CAPTURE(trial);
    // A point of the error set, by construction.
    Vector e = Vector::Zero(d.model.state_dim());
    for (int l = 0; l < h; ++l) {
      Vector wl = Vector::Zero(d.model.state_dim());
      for (int j = 0; j < g; ++j) wl += unit(rng) * d.W_hat.generators.col(j);
      e += d.residual.D[static_cast<std::size_t>(l)] * wl;
    }
    const auto sel = minimal_selection_control(d, e);
    CHECK(sel.lambda_star <= 1.0 + 1e-8);

    // Step the error with the selected feedback and a fresh disturbance.
    Vector fresh = Vector::Zero(d.model.state_dim());
    for (int j = 0; j < g; ++j) fresh += unit(rng) * d.W_hat.generators.col(j);
    const Vector e_next = d.model.A * e + d.model.B * sel.feedback + fresh;
    const auto sel_next = minimal_selection_control(d, e_next);
    CHECK(sel_next.lambda_star <= 1.0 + 1e-8);
  }
}

TEST_CASE("outer-bounded residual uncertainty is a valid coarser design") {
  const SystemModel sys = four_mass_discrete();
  const Partition dec = Partition::decentralized(4);
  const PartitionDesign exact = design_partition(sys, dec);
  DesignOptions opts;
  opts.scaled_residual_outer = true;
  const PartitionDesign outer = design_partition(sys, dec, opts);
  for (int b = 0; b < 4; ++b) {
    const auto& de = exact.coalitions[static_cast<std::size_t>(b)];
    const auto& db = outer.coalitions[static_cast<std::size_t>(b)];
    CHECK(db.xi_x >= de.xi_x - 1e-9);
    CHECK(db.xi_u >= de.xi_u - 1e-9);
    CHECK(db.alpha_x + db.beta_x + db.xi_x == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("argument validation") {
  const SystemModel sys = three_scalar_system();
  CHECK_THROWS_AS(design_partition(sys, Partition::decentralized(4)), std::invalid_argument);
  CHECK_THROWS_AS(solve_rci_lp((Matrix(1, 1) << 0.6).finished(),
                               (Matrix(1, 1) << 1.0).finished(),
                               SymBox((Vector(1) << 2.0).finished()),
                               SymBox((Vector(1) << 0.5).finished()), interval(0.2), 0),
                  std::invalid_argument);
  const PartitionDesign design = design_partition(sys, Partition::decentralized(3));
  CHECK_THROWS_AS(minimal_selection_control(design.coalitions[0], Vector::Zero(2)),
                  std::invalid_argument);
}

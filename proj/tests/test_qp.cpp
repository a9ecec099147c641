#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "coalmpc/active_set_qp.hpp"

using namespace coalmpc;

namespace {

// Brute-force oracle: enumerate every candidate active set of inequalities,
// solve the corresponding KKT system, and keep the best primal-feasible
// candidate with nonnegative multipliers. Exponential in the constraint
// count, which is fine for the sizes used here, and entirely independent of
// the solver's control flow.
std::optional<Vector> oracle_minimizer(const QpProblem& p) {
  const int n = p.num_vars();
  const int ne = static_cast<int>(p.E.rows());
  const int ni = static_cast<int>(p.C.rows());
  std::optional<Vector> best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < (1 << ni); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < ni; ++i) {
      if (mask >> i & 1) act.push_back(i);
    }
    const int k = ne + static_cast<int>(act.size());
    Matrix kkt = Matrix::Zero(n + k, n + k);
    Vector rhs(n + k);
    kkt.topLeftCorner(n, n) = p.H;
    rhs.head(n) = -p.g;
    for (int i = 0; i < ne; ++i) {
      kkt.block(n + i, 0, 1, n) = p.E.row(i);
      kkt.block(0, n + i, n, 1) = p.E.row(i).transpose();
      rhs[n + i] = p.be[i];
    }
    for (std::size_t a = 0; a < act.size(); ++a) {
      const int r = n + ne + static_cast<int>(a);
      kkt.block(r, 0, 1, n) = p.C.row(act[a]);
      kkt.block(0, r, n, 1) = p.C.row(act[a]).transpose();
      rhs[r] = p.d[act[a]];
    }
    Eigen::FullPivLU<Matrix> lu(kkt);
    const Vector sol = lu.solve(rhs);
    if ((kkt * sol - rhs).lpNorm<Eigen::Infinity>() > 1e-8) continue;
    const Vector z = sol.head(n);
    bool ok = true;
    for (std::size_t a = 0; a < act.size(); ++a) {
      if (sol[n + ne + static_cast<int>(a)] < -1e-9) ok = false;
    }
    if (ni > 0 && (p.C * z - p.d).maxCoeff() > 1e-9) ok = false;
    if (!ok) continue;
    const double obj = 0.5 * z.dot(p.H * z) + p.g.dot(z);
    if (obj < best_obj - 1e-12) {
      best_obj = obj;
      best = z;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("random dense instances match the active-set enumeration oracle") {
  DualActiveSetQp qp;
  std::mt19937 rng(4242);
  std::normal_distribution<double> gauss(0.0, 1.0);
  int optimal_seen = 0;
  int infeasible_seen = 0;
  for (int trial = 0; trial < 300; ++trial) {
    CAPTURE(trial);
    const int n = 2 + static_cast<int>(rng() % 3);
    const int ni = static_cast<int>(rng() % 7);
    const int ne = static_cast<int>(rng() % 2);
    Matrix M(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) M(i, j) = gauss(rng);
    }
    QpProblem p;
    p.H = M.transpose() * M + Matrix::Identity(n, n);
    p.g = Vector::NullaryExpr(n, [&](int) { return gauss(rng); });
    p.C = Matrix::NullaryExpr(ni, n, [&](int, int) { return gauss(rng); });
    p.E = Matrix::NullaryExpr(ne, n, [&](int, int) { return gauss(rng); });
    if (trial % 3 == 0) {
      // Bias toward feasible: right-hand sides from a witness point.
      const Vector z0 = Vector::NullaryExpr(n, [&](int) { return gauss(rng); });
      p.d = p.C * z0 + Vector::NullaryExpr(ni, [&](int) { return std::abs(gauss(rng)); });
      p.be = p.E * z0;
    } else {
      p.d = Vector::NullaryExpr(ni, [&](int) { return gauss(rng); });
      p.be = Vector::NullaryExpr(ne, [&](int) { return gauss(rng); });
    }

    const auto expected = oracle_minimizer(p);
    const QpResult res = qp.solve(p);
    if (expected.has_value()) {
      ++optimal_seen;
      REQUIRE(res.status == QpStatus::Optimal);
      CHECK((res.z - *expected).lpNorm<Eigen::Infinity>() <=
            1e-8 * (1.0 + expected->lpNorm<Eigen::Infinity>()));
      CHECK(res.kkt_residual <= 1e-8);
    } else {
      ++infeasible_seen;
      CHECK(res.status == QpStatus::Infeasible);
    }
  }
  // The mix should exercise both outcomes substantially.
  CHECK(optimal_seen >= 100);
  CHECK(infeasible_seen >= 30);
}

TEST_CASE("hand-checked instances") {
  DualActiveSetQp qp;

  SUBCASE("unconstrained minimum") {
    QpProblem p;
    p.H = Matrix::Identity(2, 2);
    p.g = (Vector(2) << 1.0, 2.0).finished();
    p.E = Matrix::Zero(0, 2);
    p.be = Vector::Zero(0);
    p.C = Matrix::Zero(0, 2);
    p.d = Vector::Zero(0);
    const auto res = qp.solve(p);
    REQUIRE(res.status == QpStatus::Optimal);
    CHECK(res.z[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(res.z[1] == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(res.objective == doctest::Approx(-2.5).epsilon(1e-12));
  }

  SUBCASE("projection onto an equality") {
    QpProblem p;
    p.H = Matrix::Identity(2, 2);
    p.g = Vector::Zero(2);
    p.E = (Matrix(1, 2) << 1.0, 1.0).finished();
    p.be = (Vector(1) << 2.0).finished();
    p.C = Matrix::Zero(0, 2);
    p.d = Vector::Zero(0);
    const auto res = qp.solve(p);
    REQUIRE(res.status == QpStatus::Optimal);
    CHECK(res.z[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(res.z[1] == doctest::Approx(1.0).epsilon(1e-10));
  }

  SUBCASE("one active inequality") {
    QpProblem p;
    p.H = Matrix::Identity(2, 2);
    p.g = Vector::Zero(2);
    p.E = Matrix::Zero(0, 2);
    p.be = Vector::Zero(0);
    p.C = (Matrix(1, 2) << -1.0, 0.0).finished();  // z0 >= 1
    p.d = (Vector(1) << -1.0).finished();
    const auto res = qp.solve(p);
    REQUIRE(res.status == QpStatus::Optimal);
    CHECK(res.z[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(res.z[1] == doctest::Approx(0.0).epsilon(1e-10));
  }

  SUBCASE("contradictory inequalities certify infeasibility") {
    QpProblem p;
    p.H = Matrix::Identity(1, 1);
    p.g = Vector::Zero(1);
    p.E = Matrix::Zero(0, 1);
    p.be = Vector::Zero(0);
    p.C = (Matrix(2, 1) << 1.0, -1.0).finished();  // z <= 0 and z >= 1
    p.d = (Vector(2) << 0.0, -1.0).finished();
    CHECK(qp.solve(p).status == QpStatus::Infeasible);
  }

  SUBCASE("inconsistent equalities certify infeasibility") {
    QpProblem p;
    p.H = Matrix::Identity(1, 1);
    p.g = Vector::Zero(1);
    p.E = (Matrix(2, 1) << 1.0, 1.0).finished();
    p.be = (Vector(2) << 0.0, 1.0).finished();
    p.C = Matrix::Zero(0, 1);
    p.d = Vector::Zero(0);
    CHECK(qp.solve(p).status == QpStatus::Infeasible);
  }

  SUBCASE("duplicated consistent equalities are tolerated") {
    QpProblem p;
    p.H = Matrix::Identity(2, 2);
    p.g = Vector::Zero(2);
    p.E = (Matrix(2, 2) << 1.0, 1.0, 1.0, 1.0).finished();
    p.be = (Vector(2) << 1.0, 1.0).finished();
    p.C = Matrix::Zero(0, 2);
    p.d = Vector::Zero(0);
    const auto res = qp.solve(p);
    REQUIRE(res.status == QpStatus::Optimal);
    CHECK(res.z[0] == doctest::Approx(0.5).epsilon(1e-10));
  }

  SUBCASE("equality plus a binding inequality on the same face") {
    QpProblem p;
    p.H = Matrix::Identity(2, 2);
    p.g = (Vector(2) << 0.0, 0.0).finished();
    p.E = (Matrix(1, 2) << 1.0, 0.0).finished();
    p.be = (Vector(1) << 1.0).finished();
    p.C = (Matrix(1, 2) << 0.0, -1.0).finished();  // z1 >= 0.5
    p.d = (Vector(1) << -0.5).finished();
    const auto res = qp.solve(p);
    REQUIRE(res.status == QpStatus::Optimal);
    CHECK(res.z[0] == doctest::Approx(1.0));
    CHECK(res.z[1] == doctest::Approx(0.5));
  }
}

TEST_CASE("input validation") {
  DualActiveSetQp qp;
  QpProblem p;
  p.H = (Matrix(2, 2) << 1.0, 0.5, -0.5, 1.0).finished();  // not symmetric
  p.g = Vector::Zero(2);
  p.E = Matrix::Zero(0, 2);
  p.be = Vector::Zero(0);
  p.C = Matrix::Zero(0, 2);
  p.d = Vector::Zero(0);
  CHECK_THROWS_AS(qp.solve(p), std::invalid_argument);

  p.H = -Matrix::Identity(2, 2);  // not positive definite
  CHECK_THROWS_AS(qp.solve(p), std::invalid_argument);

  p.H = Matrix::Identity(2, 2);
  p.C = Matrix::Zero(1, 3);
  p.d = Vector::Zero(1);
  CHECK_THROWS_AS(qp.solve(p), std::invalid_argument);
}

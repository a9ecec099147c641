#pragma once

// Reference models assembled inline so the unit tests do not depend on the
// scenario files. test_scenario_cli cross-checks that the shipped .scn
// files load to exactly these systems.

#include <map>
#include <utility>
#include <vector>

#include "coalmpc/system.hpp"

namespace coalmpc::testing {

// Four coupled mass-spring-dampers in a chain (1-2, 2-3, 3-4), each with
// position/velocity states, acceleration input through a gain of 100, and
// unit quadratic weights. Continuous time.
inline SystemModel four_mass_continuous() {
  const double m[4] = {3.0, 2.0, 3.0, 6.0};
  const double k12 = 0.5, k23 = 0.75, k34 = 1.0;
  const double c12 = 0.2, c23 = 0.25, c34 = 0.3;
  const double ksum[4] = {k12, k12 + k23, k23 + k34, k34};
  const double csum[4] = {c12, c12 + c23, c23 + c34, c34};

  std::vector<SubsystemModel> subs;
  for (int i = 0; i < 4; ++i) {
    Matrix A(2, 2);
    A << 0.0, 1.0, -ksum[i] / m[i], -csum[i] / m[i];
    Matrix B(2, 1);
    B << 0.0, 100.0;
    subs.push_back(SubsystemModel{A, B, SymBox((Vector(2) << 2.0, 8.0).finished()),
                                  SymBox((Vector(1) << 4.0).finished()),
                                  Matrix::Identity(2, 2), Matrix::Identity(1, 1)});
  }

  auto link = [](double k, double c, double mass) {
    Matrix L(2, 2);
    L << 0.0, 0.0, k / mass, c / mass;
    return L;
  };
  std::map<std::pair<int, int>, Matrix> coupling;
  coupling[{0, 1}] = link(k12, c12, m[0]);
  coupling[{1, 0}] = link(k12, c12, m[1]);
  coupling[{1, 2}] = link(k23, c23, m[1]);
  coupling[{2, 1}] = link(k23, c23, m[2]);
  coupling[{2, 3}] = link(k34, c34, m[2]);
  coupling[{3, 2}] = link(k34, c34, m[3]);
  return SystemModel(std::move(subs), std::move(coupling));
}

// Three scalar subsystems, already in discrete time:
//   x1+ = 0.6 x1 + u1 + 0.1 x2
//   x2+ = 0.6 x2 + u2
//   x3+ = 0.6 x3 + u3 + 0.1 x1
// with |x_i| <= 2, |u_i| <= 0.5 and unit weights.
inline SystemModel three_scalar_system() {
  std::vector<SubsystemModel> subs;
  for (int i = 0; i < 3; ++i) {
    subs.push_back(SubsystemModel{(Matrix(1, 1) << 0.6).finished(),
                                  (Matrix(1, 1) << 1.0).finished(),
                                  SymBox((Vector(1) << 2.0).finished()),
                                  SymBox((Vector(1) << 0.5).finished()),
                                  Matrix::Identity(1, 1), Matrix::Identity(1, 1)});
  }
  std::map<std::pair<int, int>, Matrix> coupling;
  coupling[{0, 1}] = (Matrix(1, 1) << 0.1).finished();
  coupling[{2, 0}] = (Matrix(1, 1) << 0.1).finished();
  return SystemModel(std::move(subs), std::move(coupling));
}

}  // namespace coalmpc::testing

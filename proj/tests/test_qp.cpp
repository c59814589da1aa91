// Copyright 2026 The elmrace Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <Eigen/Dense>
#include <random>
#include <sstream>

#include "elmrace/qp.hpp"

using namespace elmrace;

namespace {

// Brute-force oracle: enumerate every subset of the inequality rows as a
// candidate active set, solve the equality-constrained KKT system, keep the
// best feasible candidate with nonnegative multipliers. Independent of the
// solver implementation.
struct OracleResult {
  Eigen::VectorXd z;
  double cost = std::numeric_limits<double>::infinity();
  bool found = false;
};

OracleResult enumerate_active_sets(const qp::Problem& p) {
  const Eigen::Index n = p.num_vars();
  const Eigen::Index m = p.num_ineq();
  OracleResult best;
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (mask & (1u << i)) active.push_back(i);
    }
    const auto k = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd K(n + k, n + k);
    K.setZero();
    K.topLeftCorner(n, n) = 0.5 * (p.P + p.P.transpose());
    for (Eigen::Index r = 0; r < k; ++r) {
      K.block(n + r, 0, 1, n) = p.A.row(active[r]);
      K.block(0, n + r, n, 1) = p.A.row(active[r]).transpose();
    }
    Eigen::VectorXd rhs(n + k);
    rhs.head(n) = -p.q;
    for (Eigen::Index r = 0; r < k; ++r) rhs[n + r] = p.b[active[r]];
    const Eigen::VectorXd sol = K.fullPivLu().solve(rhs);
    const Eigen::VectorXd z = sol.head(n);
    const Eigen::VectorXd mult = sol.tail(k);
    if (!sol.allFinite()) continue;
    if (k > 0 && mult.minCoeff() < -1e-9) continue;
    if (m > 0 && ((p.A * z - p.b).maxCoeff() > 1e-9)) continue;
    const double cost = 0.5 * z.dot(p.P * z) + p.q.dot(z);
    if (cost < best.cost) {
      best.cost = cost;
      best.z = z;
      best.found = true;
    }
  }
  return best;
}

void check_kkt(const qp::Problem& p, const qp::Solution& sol, double tol = 1e-6) {
  REQUIRE(sol.status == qp::Status::solved);
  // stationarity
  Eigen::VectorXd grad = p.P * sol.z + p.q;
  if (p.num_ineq() > 0) grad += p.A.transpose() * sol.lambda;
  grad += sol.bound_duals;
  CHECK(grad.lpNorm<Eigen::Infinity>() < tol);
  // primal feasibility
  if (p.num_ineq() > 0) CHECK((p.A * sol.z - p.b).maxCoeff() < tol);
  // dual feasibility and complementary slackness
  for (Eigen::Index i = 0; i < p.num_ineq(); ++i) {
    CHECK(sol.lambda[i] > -tol);
    CHECK(std::abs(sol.lambda[i] * (p.A.row(i).dot(sol.z) - p.b[i])) < tol);
  }
}

}  // namespace

TEST_SUITE("qp") {

TEST_CASE("unconstrained quadratic recovers the target") {
  const int n = 5;
  qp::Problem p;
  p.P = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd c(n);
  c << 1, -2, 3, 0.5, -0.25;
  p.q = -c;
  qp::Solver solver;
  const auto sol = solver.solve(p);
  REQUIRE(sol.status == qp::Status::solved);
  CHECK((sol.z - c).lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("one-dimensional KKT by hand: min z^2 s.t. z >= 1") {
  qp::Problem p;
  p.P = Eigen::MatrixXd::Constant(1, 1, 2.0);
  p.q = Eigen::VectorXd::Zero(1);
  p.A = Eigen::MatrixXd::Constant(1, 1, -1.0);
  p.b = Eigen::VectorXd::Constant(1, -1.0);
  qp::Solver solver;
  const auto sol = solver.solve(p);
  REQUIRE(sol.status == qp::Status::solved);
  CHECK(sol.z[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.lambda[0] == doctest::Approx(2.0).epsilon(1e-5));
  check_kkt(p, sol);
}

TEST_CASE("random problems match the active-set enumeration oracle") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 20, m = 10;
  int solved = 0;
  for (int trial = 0; trial < 100; ++trial) {
    qp::Problem p;
    Eigen::MatrixXd L(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) L(i, j) = normal(rng);
    p.P = L * L.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
    p.q = Eigen::VectorXd::NullaryExpr(n, [&](Eigen::Index) { return normal(rng); });
    p.A.resize(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) p.A(i, j) = normal(rng);
    p.b = Eigen::VectorXd::NullaryExpr(m, [&](Eigen::Index) { return std::abs(normal(rng)); });

    const OracleResult oracle = enumerate_active_sets(p);
    REQUIRE(oracle.found);

    qp::Solver solver;
    const auto sol = solver.solve(p);
    REQUIRE(sol.status == qp::Status::solved);
    CHECK((sol.z - oracle.z).lpNorm<Eigen::Infinity>() < 1e-6);
    check_kkt(p, sol);

    // the textbook active-set fallback agrees as well
    const auto as = qp::solve_active_set(p);
    CHECK((as.z - oracle.z).lpNorm<Eigen::Infinity>() < 1e-6);
    ++solved;
  }
  CHECK(solved == 100);
}

TEST_CASE("box bounds are respected") {
  qp::Problem p;
  p.P = 2.0 * Eigen::MatrixXd::Identity(3, 3);
  p.q = Eigen::Vector3d(-10.0, 4.0, 0.0);
  p.lb = Eigen::Vector3d(-1.0, -1.0, -1.0);
  p.ub = Eigen::Vector3d(1.0, 1.0, 1.0);
  qp::Solver solver;
  const auto sol = solver.solve(p);
  REQUIRE(sol.status == qp::Status::solved);
  CHECK(sol.z[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.z[1] == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(sol.z[2] == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("warm start solves a repeated problem in no more iterations") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 30, m = 15;
  qp::Problem p;
  Eigen::MatrixXd L(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) L(i, j) = normal(rng);
  p.P = L * L.transpose() + Eigen::MatrixXd::Identity(n, n);
  p.q = Eigen::VectorXd::NullaryExpr(n, [&](Eigen::Index) { return normal(rng); });
  p.A.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) p.A(i, j) = normal(rng);
  p.b = Eigen::VectorXd::NullaryExpr(m, [&](Eigen::Index) { return std::abs(normal(rng)); });

  qp::Solver solver;
  const auto cold = solver.solve(p);
  REQUIRE(cold.status == qp::Status::solved);
  const Eigen::VectorXd y = solver.last_stacked_dual();
  const auto warm = solver.solve(p, cold.z, y);
  REQUIRE(warm.status == qp::Status::solved);
  CHECK(warm.iterations <= cold.iterations);
  CHECK((warm.z - cold.z).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("deterministic given identical inputs") {
  qp::Problem p;
  p.P = 2.0 * Eigen::MatrixXd::Identity(4, 4);
  p.q = Eigen::Vector4d(1, -1, 2, -2);
  p.lb = Eigen::Vector4d::Constant(-0.5);
  p.ub = Eigen::Vector4d::Constant(0.5);
  qp::Solver a, b;
  const auto sa = a.solve(p);
  const auto sb = b.solve(p);
  CHECK((sa.z - sb.z).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(sa.iterations == sb.iterations);
}

TEST_CASE("infeasible problem is detected with a certificate") {
  // z <= -1 and z >= 1 cannot hold together
  qp::Problem p;
  p.P = Eigen::MatrixXd::Identity(1, 1);
  p.q = Eigen::VectorXd::Zero(1);
  p.A.resize(2, 1);
  p.A << 1.0, -1.0;
  p.b.resize(2);
  p.b << -1.0, -1.0;
  qp::Solver solver;
  const auto sol = solver.solve(p);
  CHECK(sol.status == qp::Status::infeasible);
  CHECK(sol.primal_residual < 1e-6);  // certificate residual
}

TEST_CASE("problem dump emits matrix-market blocks") {
  qp::Problem p;
  p.P = Eigen::MatrixXd::Identity(2, 2);
  p.q = Eigen::Vector2d(1, 2);
  p.A = Eigen::MatrixXd::Ones(1, 2);
  p.b = Eigen::VectorXd::Ones(1);
  std::ostringstream os;
  qp::dump_problem(p, os);
  CHECK(os.str().find("MatrixMarket") != std::string::npos);
  CHECK(os.str().find("% P") != std::string::npos);
}

}  // TEST_SUITE

TEST_SUITE("qp") {

TEST_CASE("projected-Newton box solve agrees with the splitting solver") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 25;
  for (int trial = 0; trial < 20; ++trial) {
    qp::Problem p;
    Eigen::MatrixXd L(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) L(i, j) = normal(rng);
    p.P = L * L.transpose() + 0.3 * Eigen::MatrixXd::Identity(n, n);
    p.q = Eigen::VectorXd::NullaryExpr(n, [&](Eigen::Index) { return normal(rng); });
    p.lb = Eigen::VectorXd::Constant(n, -0.4);
    p.ub = Eigen::VectorXd::Constant(n, 0.4);

    const auto newton = qp::solve_box_newton(p);
    REQUIRE(newton.status == qp::Status::solved);
    qp::Solver solver;
    const auto admm = solver.solve(p);
    REQUIRE(admm.status == qp::Status::solved);
    CHECK((newton.z - admm.z).lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

}  // TEST_SUITE

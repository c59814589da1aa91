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

#include <cmath>
#include <random>

#include "elmrace/mpc.hpp"
#include "test_util.hpp"

using namespace elmrace;
using elmrace::testing::params_143;

namespace {

struct LineFixture {
  RacingLine line;
  Eigen::VectorXd profile;
};

// Stadium raceline with a moderate-speed profile; cached across cases.
const LineFixture& stadium_fixture() {
  static const LineFixture fixture = [] {
    const auto p = params_143();
    const TrackDefinition track = elmrace::testing::stadium_track(2.0, 0.5, 0.2, 0.05);
    RacelineConfig config;
    config.spacing = 0.04;
    RacelineResult result = min_curvature_raceline(track, p.geometry.w_veh, config);
    LineFixture f;
    f.profile = velocity_profile(result.line, 0.7, p.geometry, p.drivetrain, p.limits);
    f.line = std::move(result.line);
    return f;
  }();
  return fixture;
}

StepFn ekin_model(const VehicleParams& p) {
  return [geom = p.geometry, dtp = p.drivetrain, dt = p.dt](const VehicleState& x,
                                                            const ControlInput& u) {
    return ekinematic_step(x, u, geom, dtp, dt, RkOrder::sixth);
  };
}

}  // namespace

TEST_SUITE("mpc") {

TEST_CASE("projection: nearest point, heading tie-break on equidistant candidates") {
  // unit square line: its center is exactly equidistant to all four sides
  RacingLine square;
  square.x.resize(4);
  square.y.resize(4);
  square.s.resize(4);
  square.psi.resize(4);
  square.x << 0, 1, 1, 0;
  square.y << 0, 0, 1, 1;
  square.s << 0, 1, 2, 3;
  square.psi << 0, M_PI / 2, M_PI, -M_PI / 2;
  square.total_length = 4.0;

  // heading east picks the bottom side, heading west the top side
  const double s_east = project_to_s(square, 0.5, 0.5, 0.0);
  const double s_west = project_to_s(square, 0.5, 0.5, M_PI);
  CHECK(s_east >= 0.0);
  CHECK(s_east < 1.0);
  CHECK(s_west >= 2.0);
  CHECK(s_west < 3.0);

  // diagonal heading agrees equally with two sides; smaller s wins
  const double s_diag = project_to_s(square, 0.5, 0.5, M_PI / 4);
  CHECK(s_diag == doctest::Approx(s_east));

  // exactly on the line projects to itself
  const auto& f = stadium_fixture();
  const double s_query = f.line.s[7];
  const double s_proj = project_to_s(f.line, f.line.x[7], f.line.y[7], f.line.psi[7]);
  CHECK(s_proj == doctest::Approx(s_query).epsilon(1e-9));
}

TEST_CASE("reference sampling: exact arc-length bookkeeping") {
  const auto& f = stadium_fixture();
  const auto p = params_143();

  // constant-speed profile: consecutive references c*dt apart in arc length
  const Eigen::VectorXd constant = Eigen::VectorXd::Constant(f.line.size(), 1.7);
  VehicleState on_line;
  on_line.x = f.line.x[10];
  on_line.y = f.line.y[10];
  on_line.phi = f.line.psi[10];
  const ReferenceTrajectory ref = sample_reference(f.line, constant, on_line, 20, p.dt);
  REQUIRE(ref.points.size() == 20);
  double s_prev = ref.s0;
  for (const auto& pt : ref.points) {
    CHECK(pt.s - s_prev == doctest::Approx(1.7 * p.dt).epsilon(1e-12));
    s_prev = pt.s;
  }

  // N = 1: single point, one step ahead of the projection
  const ReferenceTrajectory single = sample_reference(f.line, f.profile, on_line, 1, p.dt);
  REQUIRE(single.points.size() == 1);
  CHECK(single.points[0].s > single.s0);

  // varying profile: spacing equals the profile speed at the previous station
  const ReferenceTrajectory varying = sample_reference(f.line, f.profile, on_line, 30, p.dt);
  s_prev = varying.s0;
  for (const auto& pt : varying.points) {
    const double expected = pt.s - s_prev;
    CHECK(expected > 0.0);
    CHECK(std::abs(expected) < 1.0);
    s_prev = pt.s;
  }
  // half-spaces contain their reference point strictly
  for (const auto& pt : varying.points) {
    CHECK(pt.nx * pt.x + pt.ny * pt.y < pt.b_left);
    CHECK(-(pt.nx * pt.x + pt.ny * pt.y) < pt.b_right);
  }
}

TEST_CASE("linearization recovers a linear model exactly") {
  // synthetic affine step map
  Eigen::Matrix<double, 7, 7> A_true = 0.1 * Eigen::Matrix<double, 7, 7>::Random();
  A_true.diagonal().array() += 1.0;
  Eigen::Matrix<double, 7, 2> B_true = Eigen::Matrix<double, 7, 2>::Random();
  Eigen::Matrix<double, 7, 1> c_true = Eigen::Matrix<double, 7, 1>::Random();
  const StepFn linear = [&](const VehicleState& x, const ControlInput& u) {
    return VehicleState::from_vector(A_true * x.to_vector() +
                                     B_true * Eigen::Vector2d(u.d, u.ddelta) + c_true);
  };
  VehicleState x0;
  x0.v_x = 1.0;
  x0.delta = 0.05;
  const ControlInput u0{0.4, 0.01};
  const LinearModel model = linearize_corrected(linear, x0, u0);
  CHECK((model.A - A_true).lpNorm<Eigen::Infinity>() < 1e-7);
  CHECK((model.B - B_true).lpNorm<Eigen::Infinity>() < 1e-7);

  // affine consistency at the expansion point holds by construction
  const VehicleState::Vector lhs = model.A * x0.to_vector() +
                                   model.B * Eigen::Vector2d(u0.d, u0.ddelta) + model.c;
  CHECK((lhs - linear(x0, u0).to_vector()).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("linearization of the dynamic model: Richardson step-halving") {
  const auto p = params_143();
  const StepFn model = [&](const VehicleState& x, const ControlInput& u) {
    return dynamic_step(x, u, p.geometry, p.pacejka_front, p.pacejka_rear, p.drivetrain, {},
                        p.dt, RkOrder::sixth, 1);
  };
  VehicleState x0;
  x0.v_x = 1.5;
  x0.v_y = 0.1;
  x0.omega = 1.2;
  x0.delta = 0.08;
  const ControlInput u0{0.4, 0.01};

  const LinearModel at_h = linearize_corrected(model, x0, u0, 1e-4);
  const LinearModel at_h2 = linearize_corrected(model, x0, u0, 5e-5);
  const LinearModel at_h4 = linearize_corrected(model, x0, u0, 2.5e-5);
  // central differences: error(h) ~ C h^2, so successive halvings shrink the
  // difference between estimates by about 4
  const double d1 = (at_h.A - at_h2.A).lpNorm<Eigen::Infinity>();
  const double d2 = (at_h2.A - at_h4.A).lpNorm<Eigen::Infinity>();
  CHECK(d1 / d2 == doctest::Approx(4.0).epsilon(0.5));

  const StepFn nan_model = [](const VehicleState&, const ControlInput&) {
    VehicleState s;
    s.v_x = std::numeric_limits<double>::quiet_NaN();
    return s;
  };
  CHECK_THROWS_AS(linearize_corrected(nan_model, x0, u0), IntegrationError);
}

TEST_CASE("on-reference on a straight: near-zero steering, zero slacks") {
  const auto p = params_143();
  const auto& f = stadium_fixture();
  // find a station in the middle of the bottom straight
  Eigen::Index station = 0;
  for (Eigen::Index i = 0; i < f.line.size(); ++i) {
    if (std::abs(f.line.cy[i]) < 1e-9 && f.line.cx[i] > 0.9 && f.line.cx[i] < 1.1) {
      station = i;
      break;
    }
  }
  REQUIRE(station > 0);

  VehicleState x0;
  x0.x = f.line.x[station];
  x0.y = f.line.y[station];
  x0.phi = f.line.psi[station];
  x0.v_x = f.profile[station];

  MpcWeights weights;
  weights.horizon = 30;
  MpcController controller(weights, p.limits, p.dt);
  const ReferenceTrajectory ref =
      sample_reference(f.line, f.profile, x0, weights.horizon, p.dt);
  const MpcSolutionTrace trace =
      controller.solve(ref, x0, {0.2, 0.0}, ekin_model(p), ExecutionMode::serial);

  REQUIRE(!trace.degraded);
  CHECK(std::abs(trace.first_control().ddelta) < 5e-3);
  CHECK(trace.slacks.lpNorm<Eigen::Infinity>() < 1e-6);
  for (const auto& u : trace.controls) {
    CHECK(u.d >= p.limits.d_min);
    CHECK(u.d <= p.limits.d_max);
    CHECK(u.ddelta >= p.limits.ddelta_min);
    CHECK(u.ddelta <= p.limits.ddelta_max);
  }
}

TEST_CASE("vehicle outside the band: slack activates instead of infeasibility") {
  const auto p = params_143();
  const auto& f = stadium_fixture();
  // start well beyond the left boundary; the early horizon cannot satisfy
  // the unslacked half-spaces
  VehicleState x0;
  x0.x = f.line.x[5] + 0.5 * f.line.nx[5];
  x0.y = f.line.y[5] + 0.5 * f.line.ny[5];
  x0.phi = f.line.psi[5];
  x0.v_x = 1.0;

  MpcWeights weights;
  weights.horizon = 15;
  MpcController controller(weights, p.limits, p.dt);
  const ReferenceTrajectory ref =
      sample_reference(f.line, f.profile, x0, weights.horizon, p.dt);
  const MpcSolutionTrace trace =
      controller.solve(ref, x0, {0.2, 0.0}, ekin_model(p), ExecutionMode::serial);
  REQUIRE(!trace.degraded);
  CHECK(trace.qp_status == qp::Status::solved);
  CHECK(trace.slacks.maxCoeff() > 1e-2);
  CHECK(trace.slacks.minCoeff() >= 0.0);
}

TEST_CASE("warm start on an identical horizon problem keeps cost and cuts work") {
  // horizon-shaped random QP: condensed controls plus slack block
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 150, m = 200;
  qp::Problem problem;
  Eigen::MatrixXd L(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) L(i, j) = 0.3 * normal(rng);
  problem.P = L * L.transpose() + Eigen::MatrixXd::Identity(n, n);
  problem.q = Eigen::VectorXd::NullaryExpr(n, [&](Eigen::Index) { return normal(rng); });
  problem.A.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) problem.A(i, j) = normal(rng);
  problem.b = Eigen::VectorXd::NullaryExpr(m, [&](Eigen::Index) { return 0.5 + std::abs(normal(rng)); });
  problem.lb = Eigen::VectorXd::Constant(n, -1.0);
  problem.ub = Eigen::VectorXd::Constant(n, 1.0);

  qp::Solver solver;
  const auto cold = solver.solve(problem);
  REQUIRE(cold.status == qp::Status::solved);
  const Eigen::VectorXd y = solver.last_stacked_dual();
  const auto warm = solver.solve(problem, cold.z, y);
  REQUIRE(warm.status == qp::Status::solved);
  auto cost = [&](const Eigen::VectorXd& z) {
    return 0.5 * z.dot(problem.P * z) + problem.q.dot(z);
  };
  CHECK(std::abs(cost(warm.z) - cost(cold.z)) < 1e-8 * std::max(1.0, std::abs(cost(cold.z))));
  CHECK(warm.iterations <= cold.iterations);
}

TEST_CASE("deterministic: two controllers produce identical first controls") {
  const auto p = params_143();
  const auto& f = stadium_fixture();
  VehicleState x0;
  x0.x = f.line.x[12];
  x0.y = f.line.y[12];
  x0.phi = f.line.psi[12];
  x0.v_x = 1.3;
  MpcWeights weights;
  weights.horizon = 20;
  const ReferenceTrajectory ref =
      sample_reference(f.line, f.profile, x0, weights.horizon, p.dt);

  MpcController a(weights, p.limits, p.dt);
  MpcController b(weights, p.limits, p.dt);
  const auto ta = a.solve(ref, x0, {0.1, 0.0}, ekin_model(p), ExecutionMode::serial);
  const auto tb = b.solve(ref, x0, {0.1, 0.0}, ekin_model(p), ExecutionMode::parallel);
  CHECK(ta.first_control().d == tb.first_control().d);
  CHECK(ta.first_control().ddelta == tb.first_control().ddelta);
}

}  // TEST_SUITE

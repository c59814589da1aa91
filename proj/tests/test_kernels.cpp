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

// The parallel kernels must agree with their serial references bitwise: the
// per-index work is identical and the only reduction is a max.

#include <doctest.h>

#include <random>

#include "elmrace/estimator.hpp"
#include "elmrace/mpc.hpp"
#include "elmrace/raceline.hpp"
#include "test_util.hpp"

using namespace elmrace;
using elmrace::testing::params_143;

TEST_SUITE("kernels") {

TEST_CASE("velocity-profile grid: parallel equals serial bitwise") {
  const auto p = params_143();
  const TrackDefinition track = elmrace::testing::circle_track(1.0, 120, 0.2);
  RacelineConfig config;
  config.spacing = 0.05;
  const RacelineResult result = min_curvature_raceline(track, p.geometry.w_veh, config);
  Eigen::VectorXd mu_grid(15);
  for (int i = 0; i < 15; ++i) mu_grid[i] = 0.4 + 0.05 * i;

  const VelocityProfileSet serial = velocity_profiles_for_grid(
      result.line, mu_grid, p.geometry, p.drivetrain, p.limits, ExecutionMode::serial);
  const VelocityProfileSet parallel = velocity_profiles_for_grid(
      result.line, mu_grid, p.geometry, p.drivetrain, p.limits, ExecutionMode::parallel);
  CHECK((serial.profiles - parallel.profiles).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("horizon linearization: parallel equals serial bitwise") {
  const auto p = params_143();
  std::mt19937_64 rng(13);
  std::vector<VehicleState> states;
  std::vector<ControlInput> inputs;
  for (int k = 0; k < 50; ++k) {
    states.push_back(elmrace::testing::random_state(rng));
    inputs.push_back(elmrace::testing::random_control(rng));
  }
  const StepFn model = [&](const VehicleState& x, const ControlInput& u) {
    return dynamic_step(x, u, p.geometry, p.pacejka_front, p.pacejka_rear, p.drivetrain, {},
                        p.dt, RkOrder::sixth, 1);
  };
  const auto serial = linearize_horizon(model, states, inputs, ExecutionMode::serial);
  const auto parallel = linearize_horizon(model, states, inputs, ExecutionMode::parallel);
  for (std::size_t k = 0; k < serial.size(); ++k) {
    CHECK((serial[k].A - parallel[k].A).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((serial[k].B - parallel[k].B).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((serial[k].c - parallel[k].c).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("slip-range scan: parallel equals serial bitwise and is monotone") {
  const auto p = params_143();
  Elm elm(64, 9);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 0.1);
  Eigen::VectorXd beta(64);
  for (int i = 0; i < 64; ++i) beta[i] = normal(rng);
  elm.set_output_weights(beta);

  const auto f = [&](double a) { return elm.forward(a); };
  double prev = 0.0;
  for (double hi = 0.05; hi < 1.5; hi += 0.07) {
    const double serial = scan_abs_max(f, -hi, hi, 0.002, ExecutionMode::serial);
    const double parallel = scan_abs_max(f, -hi, hi, 0.002, ExecutionMode::parallel);
    CHECK(serial == parallel);
    CHECK(serial >= prev);
    prev = serial;
  }
  (void)p;
}

}  // TEST_SUITE

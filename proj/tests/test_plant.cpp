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

#include "elmrace/plant.hpp"
#include "test_util.hpp"

using namespace elmrace;
using elmrace::testing::data_dir;
using elmrace::testing::params_143;

TEST_SUITE("plant") {

TEST_CASE("constant schedule matches the raw dynamic model bitwise") {
  const auto p = params_143();
  PlantConfig config;
  config.vehicle = p;
  config.n_substeps = 10;
  Plant plant(config);

  VehicleState x;
  x.v_x = 1.5;
  x.delta = 0.1;
  const ControlInput u{0.5, 0.02};
  const auto result = plant.step(x, u, 0.0);
  REQUIRE(!result.blown_up);

  const VehicleState direct = dynamic_step(x, u, p.geometry, p.pacejka_front, p.pacejka_rear,
                                           p.drivetrain, {}, p.dt, RkOrder::sixth, 10);
  CHECK((result.state.to_vector() - direct.to_vector()).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((result.measurement.to_vector() - result.state.to_vector()).lpNorm<Eigen::Infinity>() ==
        0.0);
}

TEST_CASE("step schedule switches the peak forces by the configured factor") {
  const auto p = params_143();
  PlantConfig config;
  config.vehicle = p;
  config.schedule = {FrictionSchedule::Kind::step, 1.0, 0.65, 5.0, 0.0};
  Plant plant(config);

  CHECK(plant.true_mu(4.99) == doctest::Approx(plant.true_mu(0.0)));
  CHECK(plant.true_mu(5.0) == doctest::Approx(0.65 * plant.true_mu(0.0)));  // right-continuous
  CHECK(plant.true_mu(8.0) == doctest::Approx(0.65 * plant.true_mu(0.0)));

  // the plant step before/after the switch uses the corresponding D values
  VehicleState x;
  x.v_x = 1.5;
  x.v_y = 0.1;
  x.omega = 1.0;
  const ControlInput u{0.3, 0.0};
  PacejkaParams scaled_f = p.pacejka_front;
  PacejkaParams scaled_r = p.pacejka_rear;
  scaled_f.D *= 0.65;
  scaled_r.D *= 0.65;
  const auto after = plant.step(x, u, 6.0);
  const VehicleState direct = dynamic_step(x, u, p.geometry, scaled_f, scaled_r, p.drivetrain, {},
                                           p.dt, RkOrder::sixth, 10);
  CHECK((after.state.to_vector() - direct.to_vector()).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("linear decay interpolates the true friction linearly") {
  const auto p = params_143();
  PlantConfig config;
  config.vehicle = p;
  config.schedule = {FrictionSchedule::Kind::linear_decay, 1.0, 0.6, 0.0, 10.0};
  Plant plant(config);
  const double mu0 = (p.pacejka_front.D + p.pacejka_rear.D) / (p.geometry.m * kGravity);
  for (double t : {0.0, 2.5, 5.0, 7.5, 10.0, 12.0}) {
    const double scale = t >= 10.0 ? 0.6 : 1.0 + (0.6 - 1.0) * t / 10.0;
    CHECK(plant.true_mu(t) == doctest::Approx(scale * mu0).epsilon(1e-12));
  }
}

TEST_CASE("true friction at 1:43 defaults is about 0.91 and scales linearly") {
  const auto p = params_143();
  PlantConfig config;
  config.vehicle = p;
  Plant plant(config);
  CHECK(plant.true_mu(0.0) == doctest::Approx(0.9094).epsilon(1e-3));

  config.schedule = {FrictionSchedule::Kind::constant, 0.5, 0.5, 0.0, 0.0};
  Plant half(config);
  CHECK(half.true_mu(3.0) == doctest::Approx(0.5 * plant.true_mu(3.0)).epsilon(1e-12));
}

TEST_CASE("noise stream is reproducible from the seed") {
  const auto p = params_143();
  PlantConfig config;
  config.vehicle = p;
  config.noise = {0.001, 0.002, 0.0005, 0.01};
  config.seed = 1234;

  auto run = [&]() {
    Plant plant(config);
    VehicleState x;
    x.v_x = 1.2;
    std::vector<double> stream;
    for (int k = 0; k < 50; ++k) {
      const auto result = plant.step(x, {0.3, 0.005}, k * p.dt);
      stream.push_back(result.measurement.x);
      stream.push_back(result.measurement.v_y);
      x = result.state;
    }
    return stream;
  };
  const auto a = run();
  const auto b = run();
  CHECK(a == b);
}

TEST_CASE("divergence is reported as a loss-of-control event") {
  const auto p = params_143();
  PlantConfig config;
  config.vehicle = p;
  config.v_blowup = 2.0;
  Plant plant(config);
  VehicleState x;
  x.v_x = 1.9;
  bool blown = false;
  for (int k = 0; k < 400 && !blown; ++k) {
    const auto result = plant.step(x, {1.0, 0.0}, k * p.dt);
    blown = result.blown_up;
    x = result.state;
  }
  CHECK(blown);
}

TEST_CASE("scenario files round trip") {
  const auto p = params_143();
  const PlantConfig wear = load_scenario(data_dir() / "scenarios" / "wear.json", p);
  CHECK(wear.schedule.kind == FrictionSchedule::Kind::linear_decay);
  CHECK(wear.schedule.end == doctest::Approx(0.6));
  const PlantConfig sudden = load_scenario(data_dir() / "scenarios" / "sudden.json", p);
  CHECK(sudden.schedule.kind == FrictionSchedule::Kind::step);
  CHECK(sudden.schedule.t0 == doctest::Approx(18.0));

  const auto tmp = std::filesystem::temp_directory_path() / "elmrace_scenario.json";
  save_scenario(wear, tmp);
  const PlantConfig reload = load_scenario(tmp, p);
  CHECK(reload.schedule.start == wear.schedule.start);
  CHECK(reload.schedule.t1 == wear.schedule.t1);
  CHECK(reload.seed == wear.seed);
  std::filesystem::remove(tmp);

  CHECK_THROWS_AS(load_scenario("missing.json", p), ParseError);
}

}  // TEST_SUITE

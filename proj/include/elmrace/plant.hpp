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

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>

#include "elmrace/vehicle.hpp"

namespace elmrace {

/// Time profile of the tire-wear scale factor applied to the peak forces
/// D_f, D_r (B and C stay fixed).
struct FrictionSchedule {
  enum class Kind { constant, linear_decay, exponential_decay, step };
  Kind kind = Kind::constant;
  double start = 1.0;
  double end = 1.0;
  double t0 = 0.0;  // [s]
  double t1 = 0.0;  // [s]; for exponential decay, t1 - t0 is the time constant

  double scale_at(double t) const;
};

/// Per-channel measurement noise standard deviations.
struct NoiseConfig {
  double pos = 0.0;      // x, y [m]
  double vel = 0.0;      // v_x, v_y [m/s]
  double heading = 0.0;  // phi [rad]
  double omega = 0.0;    // [rad/s]
};

struct PlantConfig {
  VehicleParams vehicle;
  FrictionSchedule schedule;
  NoiseConfig noise;
  SlopeSignals slope;
  std::uint64_t seed = 0;
  int n_substeps = 10;       // integrator substeps per control period
  double v_blowup = 10.0;    // [m/s]; beyond this the episode aborts
  RkOrder order = RkOrder::sixth;
};

/// Loads schedule/noise/slope/seed from a scenario JSON document.
PlantConfig load_scenario(const std::filesystem::path& file, const VehicleParams& vehicle);
void save_scenario(const PlantConfig& config, const std::filesystem::path& file);

/// Ground-truth plant: the full dynamic model with scriptable friction and
/// optional Gaussian measurement noise. Owns its RNG; single-threaded.
class Plant {
 public:
  explicit Plant(const PlantConfig& config)
      : config_(config), rng_(config.seed), normal_(0.0, 1.0) {}

  struct StepResult {
    VehicleState state;        // true next state
    VehicleState measurement;  // state plus noise draw
    bool blown_up = false;     // loss-of-control event
  };

  /// Advances one control period from time t. Steering is clamped into its
  /// box and v_x is floored at the low-speed epsilon after the step.
  StepResult step(const VehicleState& state, const ControlInput& u, double t);

  /// (D_f(t) + D_r(t)) / (m g).
  double true_mu(double t) const;

  const PlantConfig& config() const { return config_; }

  /// Test hook: invoked with the true state after each step, before
  /// measurement. Lets tests inject perturbations at chosen times.
  std::function<void(double t, VehicleState&)> state_hook;

 private:
  PlantConfig config_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
};

}  // namespace elmrace

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

#include "elmrace/plant.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "elmrace/errors.hpp"

namespace elmrace {

namespace {
using Json = nlohmann::json;
}

double FrictionSchedule::scale_at(double t) const {
  switch (kind) {
    case Kind::constant:
      return start;
    case Kind::linear_decay: {
      if (t <= t0) return start;
      if (t >= t1) return end;
      return start + (end - start) * (t - t0) / (t1 - t0);
    }
    case Kind::exponential_decay: {
      if (t <= t0) return start;
      const double tau = std::max(t1 - t0, 1e-9);
      return end + (start - end) * std::exp(-(t - t0) / tau);
    }
    case Kind::step:
      return t < t0 ? start : end;  // right-continuous at the step time
  }
  return start;
}

Plant::StepResult Plant::step(const VehicleState& state, const ControlInput& u, double t) {
  const VehicleParams& veh = config_.vehicle;
  const double scale = config_.schedule.scale_at(t);
  PacejkaParams front = veh.pacejka_front;
  PacejkaParams rear = veh.pacejka_rear;
  front.D *= scale;
  rear.D *= scale;

  StepResult result;
  try {
    result.state = dynamic_step(state, u, veh.geometry, front, rear, veh.drivetrain,
                                config_.slope, veh.dt, config_.order, config_.n_substeps);
  } catch (const IntegrationError&) {
    result.state = state;
    result.blown_up = true;
    result.measurement = state;
    return result;
  }
  result.state.delta = clamp(result.state.delta, veh.limits.delta_min, veh.limits.delta_max);
  result.state.v_x = std::max(result.state.v_x, kVxEpsilon);

  if (state_hook) state_hook(t, result.state);

  const double speed = std::hypot(result.state.v_x, result.state.v_y);
  if (!result.state.all_finite() || speed > config_.v_blowup) {
    result.blown_up = true;
    result.measurement = result.state;
    return result;
  }

  result.measurement = result.state;
  const NoiseConfig& noise = config_.noise;
  if (noise.pos > 0) {
    result.measurement.x += noise.pos * normal_(rng_);
    result.measurement.y += noise.pos * normal_(rng_);
  }
  if (noise.heading > 0) result.measurement.phi += noise.heading * normal_(rng_);
  if (noise.vel > 0) {
    result.measurement.v_x += noise.vel * normal_(rng_);
    result.measurement.v_y += noise.vel * normal_(rng_);
  }
  if (noise.omega > 0) result.measurement.omega += noise.omega * normal_(rng_);
  return result;
}

double Plant::true_mu(double t) const {
  const VehicleParams& veh = config_.vehicle;
  const double scale = config_.schedule.scale_at(t);
  return (veh.pacejka_front.D + veh.pacejka_rear.D) * scale / (veh.geometry.m * kGravity);
}

PlantConfig load_scenario(const std::filesystem::path& file, const VehicleParams& vehicle) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open scenario file: " + file.string());
  Json doc;
  try {
    in >> doc;
  } catch (const Json::exception& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
  PlantConfig config;
  config.vehicle = vehicle;
  const auto& sched = doc.at("schedule");
  const std::string kind = sched.at("kind").get<std::string>();
  if (kind == "constant") {
    config.schedule.kind = FrictionSchedule::Kind::constant;
  } else if (kind == "linear-decay") {
    config.schedule.kind = FrictionSchedule::Kind::linear_decay;
  } else if (kind == "exponential-decay") {
    config.schedule.kind = FrictionSchedule::Kind::exponential_decay;
  } else if (kind == "step") {
    config.schedule.kind = FrictionSchedule::Kind::step;
  } else {
    throw ValidationError(file.string() + ": unknown schedule kind '" + kind + "'");
  }
  config.schedule.start = sched.value("start", 1.0);
  config.schedule.end = sched.value("end", config.schedule.start);
  config.schedule.t0 = sched.value("t0", 0.0);
  config.schedule.t1 = sched.value("t1", config.schedule.t0);
  if (!(config.schedule.start > 0) || !(config.schedule.end > 0)) {
    throw ValidationError(file.string() + ": schedule scale factors must be positive");
  }
  if (doc.contains("noise")) {
    const auto& noise = doc.at("noise");
    config.noise.pos = noise.value("pos", 0.0);
    config.noise.vel = noise.value("vel", 0.0);
    config.noise.heading = noise.value("heading", 0.0);
    config.noise.omega = noise.value("omega", 0.0);
    if (config.noise.pos < 0 || config.noise.vel < 0 || config.noise.heading < 0 ||
        config.noise.omega < 0) {
      throw ValidationError(file.string() + ": noise std dev must be nonnegative");
    }
  }
  if (doc.contains("slope")) {
    config.slope.p = doc.at("slope").value("p", 0.0);
    config.slope.r = doc.at("slope").value("r", 0.0);
  }
  config.seed = doc.value("seed", 0);
  config.n_substeps = doc.value("n_substeps", 10);
  config.v_blowup = doc.value("v_blowup", 10.0);
  return config;
}

void save_scenario(const PlantConfig& config, const std::filesystem::path& file) {
  Json doc;
  const char* kind = "constant";
  switch (config.schedule.kind) {
    case FrictionSchedule::Kind::constant: kind = "constant"; break;
    case FrictionSchedule::Kind::linear_decay: kind = "linear-decay"; break;
    case FrictionSchedule::Kind::exponential_decay: kind = "exponential-decay"; break;
    case FrictionSchedule::Kind::step: kind = "step"; break;
  }
  doc["schedule"] = {{"kind", kind},
                     {"start", config.schedule.start},
                     {"end", config.schedule.end},
                     {"t0", config.schedule.t0},
                     {"t1", config.schedule.t1}};
  doc["noise"] = {{"pos", config.noise.pos},
                  {"vel", config.noise.vel},
                  {"heading", config.noise.heading},
                  {"omega", config.noise.omega}};
  doc["slope"] = {{"p", config.slope.p}, {"r", config.slope.r}};
  doc["seed"] = config.seed;
  doc["n_substeps"] = config.n_substeps;
  doc["v_blowup"] = config.v_blowup;
  std::ofstream out(file);
  if (!out) throw ParseError("cannot write scenario file: " + file.string());
  out << doc.dump(1, '\t') << "\n";
}

}  // namespace elmrace

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

#include "elmrace/vehicle.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace elmrace {

std::pair<double, double> slip_angles(const VehicleState& state, const VehicleGeometry& geom) {
  const double v_x = std::max(state.v_x, kVxEpsilon);
  const double alpha_f = state.delta - std::atan((state.omega * geom.l_f + state.v_y) / v_x);
  const double alpha_r = std::atan((state.omega * geom.l_r - state.v_y) / v_x);
  return {alpha_f, alpha_r};
}

double pacejka_lateral(const PacejkaParams& params, double alpha) {
  return params.D * std::sin(params.C * std::atan(params.B * alpha));
}

double longitudinal_force(const DrivetrainParams& dt_params, double d, double v_x,
                          Resistance resistance) {
  double force = (dt_params.C_m1 - dt_params.C_m2 * v_x) * d;
  if (resistance == Resistance::include) {
    force -= dt_params.C_roll + dt_params.C_d * v_x * v_x;
  }
  return force;
}

Eigen::Matrix<double, 5, 1> kinematic_deriv(const Eigen::Matrix<double, 5, 1>& state, double a,
                                            double ddelta, const VehicleGeometry& geom,
                                            double dt) {
  const double phi = state[2];
  const double v = state[3];
  const double delta = state[4];
  const double beta = std::atan(geom.l_f / geom.wheelbase() * std::tan(delta));
  Eigen::Matrix<double, 5, 1> deriv;
  deriv << v * std::cos(phi + beta), v * std::sin(phi + beta), v * std::sin(beta) / geom.l_r, a,
      ddelta / dt;
  return deriv;
}

VehicleState dynamic_deriv(const VehicleState& state, const ControlInput& u,
                           const VehicleGeometry& geom, const PacejkaParams& pacejka_f,
                           const PacejkaParams& pacejka_r, const DrivetrainParams& dt_params,
                           const SlopeSignals& slope, double dt) {
  const auto [alpha_f, alpha_r] = slip_angles(state, geom);
  const double F_fy = pacejka_lateral(pacejka_f, alpha_f);
  const double F_ry = pacejka_lateral(pacejka_r, alpha_r);
  const double F_rx = longitudinal_force(dt_params, u.d, state.v_x, Resistance::include);
  const double m = geom.m;

  VehicleState deriv;
  deriv.x = state.v_x * std::cos(state.phi) - state.v_y * std::sin(state.phi);
  deriv.y = state.v_x * std::sin(state.phi) + state.v_y * std::cos(state.phi);
  deriv.phi = state.omega;
  deriv.v_x = (F_rx - F_fy * std::sin(state.delta) + m * state.v_y * state.omega -
               m * kGravity * std::sin(slope.p)) /
              m;
  deriv.v_y = (F_ry + F_fy * std::cos(state.delta) - m * state.v_x * state.omega +
               m * kGravity * std::sin(slope.r)) /
              m;
  deriv.omega = (F_fy * geom.l_f * std::cos(state.delta) - F_ry * geom.l_r) / geom.I_z;
  deriv.delta = u.ddelta / dt;
  return deriv;
}

VehicleState ekinematic_deriv(const VehicleState& state, const ControlInput& u,
                              const VehicleGeometry& geom, const DrivetrainParams& dt_params,
                              double dt) {
  const double F_rx = longitudinal_force(dt_params, u.d, state.v_x, Resistance::ignore);
  const double vdot_x = F_rx / geom.m;
  const double delta_rate = u.ddelta / dt;
  const double coupling = delta_rate * state.v_x + vdot_x * state.delta;

  VehicleState deriv;
  deriv.x = state.v_x * std::cos(state.phi) - state.v_y * std::sin(state.phi);
  deriv.y = state.v_x * std::sin(state.phi) + state.v_y * std::cos(state.phi);
  deriv.phi = state.omega;
  deriv.v_x = vdot_x;
  deriv.v_y = geom.l_f / geom.wheelbase() * coupling;
  deriv.omega = coupling / geom.wheelbase();
  deriv.delta = delta_rate;
  return deriv;
}

VehicleState dynamic_step(const VehicleState& state, const ControlInput& u,
                          const VehicleGeometry& geom, const PacejkaParams& pacejka_f,
                          const PacejkaParams& pacejka_r, const DrivetrainParams& dt_params,
                          const SlopeSignals& slope, double dt, RkOrder order, int n_substeps) {
  auto deriv = [&](const VehicleState::Vector& v) {
    return dynamic_deriv(VehicleState::from_vector(v), u, geom, pacejka_f, pacejka_r, dt_params,
                         slope, dt)
        .to_vector();
  };
  VehicleState::Vector v = state.to_vector();
  const double h = dt / n_substeps;
  for (int i = 0; i < n_substeps; ++i) v = rk_step(deriv, v, h, order);
  return VehicleState::from_vector(v);
}

VehicleState ekinematic_step(const VehicleState& state, const ControlInput& u,
                             const VehicleGeometry& geom, const DrivetrainParams& dt_params,
                             double dt, RkOrder order) {
  auto deriv = [&](const VehicleState::Vector& v) {
    return ekinematic_deriv(VehicleState::from_vector(v), u, geom, dt_params, dt).to_vector();
  };
  return VehicleState::from_vector(rk_step(deriv, state.to_vector(), dt, order));
}

namespace {

std::map<std::string, double> parse_key_value_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open parameter file: " + file.string());
  std::map<std::string, double> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    // trim
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(file.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      std::size_t pos = 0;
      const double x = std::stod(val, &pos);
      if (pos != val.size()) throw std::invalid_argument(val);
      kv[key] = x;
    } catch (const std::exception&) {
      throw ParseError(file.string() + ":" + std::to_string(line_no) + ": bad number '" + val +
                       "'");
    }
  }
  return kv;
}

double require(const std::map<std::string, double>& kv, const std::string& key,
               const std::filesystem::path& file) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw ParseError(file.string() + ": missing key '" + key + "'");
  return it->second;
}

}  // namespace

VehicleParams load_vehicle_params(const std::filesystem::path& file) {
  const auto kv = parse_key_value_file(file);
  VehicleParams p;
  p.geometry.m = require(kv, "m", file);
  p.geometry.I_z = require(kv, "I_z", file);
  p.geometry.l_f = require(kv, "l_f", file);
  p.geometry.l_r = require(kv, "l_r", file);
  p.geometry.w_veh = require(kv, "w_veh", file);
  p.pacejka_front = {require(kv, "B_f", file), require(kv, "C_f", file), require(kv, "D_f", file)};
  p.pacejka_rear = {require(kv, "B_r", file), require(kv, "C_r", file), require(kv, "D_r", file)};
  p.drivetrain = {require(kv, "C_m1", file), require(kv, "C_m2", file), require(kv, "C_roll", file),
                  require(kv, "C_d", file)};
  p.limits = {require(kv, "d_min", file),      require(kv, "d_max", file),
              require(kv, "delta_min", file),  require(kv, "delta_max", file),
              require(kv, "ddelta_min", file), require(kv, "ddelta_max", file)};
  p.dt = require(kv, "dt", file);

  if (!(p.geometry.m > 0 && p.geometry.I_z > 0 && p.geometry.l_f > 0 && p.geometry.l_r > 0 &&
        p.geometry.w_veh > 0)) {
    throw ValidationError(file.string() + ": geometry values must be strictly positive");
  }
  if (!(p.pacejka_front.B > 0 && p.pacejka_front.C > 0 && p.pacejka_front.D >= 0 &&
        p.pacejka_rear.B > 0 && p.pacejka_rear.C > 0 && p.pacejka_rear.D >= 0)) {
    throw ValidationError(file.string() + ": Pacejka parameters out of range");
  }
  if (!(p.drivetrain.C_m1 > 0 && p.drivetrain.C_roll >= 0 && p.drivetrain.C_d >= 0)) {
    throw ValidationError(file.string() + ": drivetrain parameters out of range");
  }
  if (!(p.dt > 0)) throw ValidationError(file.string() + ": dt must be positive");
  return p;
}

void save_vehicle_params(const VehicleParams& p, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw ParseError("cannot write parameter file: " + file.string());
  out.precision(17);
  out << "m = " << p.geometry.m << "\nI_z = " << p.geometry.I_z << "\nl_f = " << p.geometry.l_f
      << "\nl_r = " << p.geometry.l_r << "\nw_veh = " << p.geometry.w_veh
      << "\nB_f = " << p.pacejka_front.B << "\nC_f = " << p.pacejka_front.C
      << "\nD_f = " << p.pacejka_front.D << "\nB_r = " << p.pacejka_rear.B
      << "\nC_r = " << p.pacejka_rear.C << "\nD_r = " << p.pacejka_rear.D
      << "\nC_m1 = " << p.drivetrain.C_m1 << "\nC_m2 = " << p.drivetrain.C_m2
      << "\nC_roll = " << p.drivetrain.C_roll << "\nC_d = " << p.drivetrain.C_d
      << "\nd_min = " << p.limits.d_min << "\nd_max = " << p.limits.d_max
      << "\ndelta_min = " << p.limits.delta_min << "\ndelta_max = " << p.limits.delta_max
      << "\nddelta_min = " << p.limits.ddelta_min << "\nddelta_max = " << p.limits.ddelta_max
      << "\ndt = " << p.dt << "\n";
}

}  // namespace elmrace

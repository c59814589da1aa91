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

#include <Eigen/Core>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>

#include "elmrace/errors.hpp"

namespace elmrace {

inline constexpr double kGravity = 9.81;  // [m/s^2]

// Longitudinal speed floor used in slip-angle denominators. The arctangent
// is ill-posed as v_x -> 0, so v_x is clamped to this value wherever it
// appears in a denominator.
inline constexpr double kVxEpsilon = 0.05;  // [m/s]

/// Seven-state pose/velocity description shared by the dynamic and
/// extended-kinematic bicycle models. Positions and heading are in the
/// global frame; velocities are in the body frame.
struct VehicleState {
  double x = 0.0;      // [m]
  double y = 0.0;      // [m]
  double phi = 0.0;    // heading [rad]
  double v_x = 0.0;    // longitudinal body velocity [m/s]
  double v_y = 0.0;    // lateral body velocity [m/s]
  double omega = 0.0;  // yaw rate [rad/s]
  double delta = 0.0;  // steering angle [rad]

  using Vector = Eigen::Matrix<double, 7, 1>;

  Vector to_vector() const {
    Vector v;
    v << x, y, phi, v_x, v_y, omega, delta;
    return v;
  }
  static VehicleState from_vector(const Vector& v) {
    return VehicleState{v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
  }
  bool all_finite() const { return to_vector().allFinite(); }
};

/// Per-step actuation: throttle plus a steering increment applied over one
/// control period.
struct ControlInput {
  double d = 0.0;       // throttle, dimensionless
  double ddelta = 0.0;  // steering increment per step [rad]
};

struct VehicleGeometry {
  double m = 0.0;      // mass [kg]
  double I_z = 0.0;    // yaw inertia [kg m^2]
  double l_f = 0.0;    // COM to front axle [m]
  double l_r = 0.0;    // COM to rear axle [m]
  double w_veh = 0.0;  // width [m]

  double wheelbase() const { return l_f + l_r; }
};

/// Magic-formula lateral tire curve coefficients for one axle.
struct PacejkaParams {
  double B = 0.0;  // stiffness factor
  double C = 0.0;  // shape factor
  double D = 0.0;  // peak force [N]
};

struct DrivetrainParams {
  double C_m1 = 0.0;    // motor gain [N]
  double C_m2 = 0.0;    // back-EMF gain [N s/m]
  double C_roll = 0.0;  // rolling resistance [N]
  double C_d = 0.0;     // aerodynamic drag [N s^2/m^2]
};

/// Roll/pitch of the track surface, small-angle regime (cos ~ 1).
struct SlopeSignals {
  double p = 0.0;  // roll [rad]
  double r = 0.0;  // pitch [rad]
};

struct ActuationLimits {
  double d_min = -1.0;
  double d_max = 1.0;
  double delta_min = -0.35;
  double delta_max = 0.35;
  double ddelta_min = -0.1;
  double ddelta_max = 0.1;
};

/// Everything the flat vehicle parameter file carries.
struct VehicleParams {
  VehicleGeometry geometry;
  PacejkaParams pacejka_front;
  PacejkaParams pacejka_rear;
  DrivetrainParams drivetrain;
  ActuationLimits limits;
  double dt = 0.02;  // control period [s]
};

VehicleParams load_vehicle_params(const std::filesystem::path& file);
void save_vehicle_params(const VehicleParams& params, const std::filesystem::path& file);

/// Front/rear slip angles. v_x is clamped to kVxEpsilon in the denominator;
/// callers below that speed get regularized (not failed) values.
std::pair<double, double> slip_angles(const VehicleState& state, const VehicleGeometry& geom);

/// D sin(C atan(B alpha)).
double pacejka_lateral(const PacejkaParams& params, double alpha);

enum class Resistance { include, ignore };

/// Rear longitudinal force. The extended-kinematic model ignores the
/// rolling/aerodynamic resistance terms; the dynamic model includes them.
double longitudinal_force(const DrivetrainParams& dt_params, double d, double v_x,
                          Resistance resistance);

/// Kinematic bicycle model, 5 states (x, y, phi, v, delta), inputs
/// (a, ddelta-per-step). dt converts the steering increment to a rate.
Eigen::Matrix<double, 5, 1> kinematic_deriv(const Eigen::Matrix<double, 5, 1>& state, double a,
                                            double ddelta, const VehicleGeometry& geom, double dt);

/// Dynamic bicycle model with Pacejka tire forces and gravity-slope terms.
VehicleState dynamic_deriv(const VehicleState& state, const ControlInput& u,
                           const VehicleGeometry& geom, const PacejkaParams& pacejka_f,
                           const PacejkaParams& pacejka_r, const DrivetrainParams& dt_params,
                           const SlopeSignals& slope, double dt);

/// Extended-kinematic model: kinematic model lifted to the 7-state layout by
/// zeroing slip-angle derivatives; resistance terms are excluded from F_rx.
VehicleState ekinematic_deriv(const VehicleState& state, const ControlInput& u,
                              const VehicleGeometry& geom, const DrivetrainParams& dt_params,
                              double dt);

enum class RkOrder { fourth = 4, sixth = 6 };

namespace detail {
// Butcher tableaus for the fixed-step explicit integrators.
struct Rk4Tableau {
  static constexpr int stages = 4;
  static constexpr double a[4][4] = {
      {0, 0, 0, 0}, {0.5, 0, 0, 0}, {0, 0.5, 0, 0}, {0, 0, 1.0, 0}};
  static constexpr double b[4] = {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6};
};
struct Rk6Tableau {
  // 7-stage sixth-order method (Butcher).
  static constexpr int stages = 7;
  static constexpr double a[7][7] = {
      {0, 0, 0, 0, 0, 0, 0},
      {1.0 / 3, 0, 0, 0, 0, 0, 0},
      {0, 2.0 / 3, 0, 0, 0, 0, 0},
      {1.0 / 12, 1.0 / 3, -1.0 / 12, 0, 0, 0, 0},
      {-1.0 / 16, 9.0 / 8, -3.0 / 16, -3.0 / 8, 0, 0, 0},
      {0, 9.0 / 8, -3.0 / 8, -3.0 / 4, 1.0 / 2, 0, 0},
      {9.0 / 44, -9.0 / 11, 63.0 / 44, 18.0 / 11, 0, -16.0 / 11, 0}};
  static constexpr double b[7] = {11.0 / 120, 0,          27.0 / 40, 27.0 / 40,
                                  -4.0 / 15,  -4.0 / 15, 11.0 / 120};
};

template <typename Tableau, typename Vec, typename Deriv>
Vec rk_step_impl(Deriv&& deriv, const Vec& state, double dt) {
  Vec k[Tableau::stages];
  for (int i = 0; i < Tableau::stages; ++i) {
    Vec arg = state;
    for (int j = 0; j < i; ++j) {
      if (Tableau::a[i][j] != 0.0) arg += (dt * Tableau::a[i][j]) * k[j];
    }
    k[i] = deriv(arg);
    if (!k[i].allFinite()) {
      throw IntegrationError("non-finite derivative in integrator stage " + std::to_string(i));
    }
  }
  Vec next = state;
  for (int i = 0; i < Tableau::stages; ++i) {
    if (Tableau::b[i] != 0.0) next += (dt * Tableau::b[i]) * k[i];
  }
  return next;
}
}  // namespace detail

/// One explicit Runge-Kutta step of the configured order. Deterministic for
/// identical inputs; throws IntegrationError if any stage derivative is
/// non-finite.
template <typename Vec, typename Deriv>
Vec rk_step(Deriv&& deriv, const Vec& state, double dt, RkOrder order = RkOrder::sixth) {
  if (!(dt > 0.0)) throw IntegrationError("rk_step requires dt > 0");
  if (order == RkOrder::fourth) {
    return detail::rk_step_impl<detail::Rk4Tableau>(deriv, state, dt);
  }
  return detail::rk_step_impl<detail::Rk6Tableau>(deriv, state, dt);
}

/// Integrates the dynamic model over one control period.
VehicleState dynamic_step(const VehicleState& state, const ControlInput& u,
                          const VehicleGeometry& geom, const PacejkaParams& pacejka_f,
                          const PacejkaParams& pacejka_r, const DrivetrainParams& dt_params,
                          const SlopeSignals& slope, double dt, RkOrder order = RkOrder::sixth,
                          int n_substeps = 1);

/// Integrates the extended-kinematic (nominal) model over one control period.
VehicleState ekinematic_step(const VehicleState& state, const ControlInput& u,
                             const VehicleGeometry& geom, const DrivetrainParams& dt_params,
                             double dt, RkOrder order = RkOrder::sixth);

inline double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace elmrace

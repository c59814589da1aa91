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
#include <filesystem>

#include "elmrace/track.hpp"
#include "elmrace/vehicle.hpp"

namespace elmrace {

enum class ExecutionMode { serial, parallel };

/// Racing line plus everything the controller needs alongside it: arc
/// length, heading, curvature, the left normals of the generating
/// centerline, and the remaining lateral margins toward either edge.
struct RacingLine {
  Eigen::VectorXd x, y;        // line points [m]
  Eigen::VectorXd s;           // arc length, strictly increasing from 0 [m]
  Eigen::VectorXd v_x;         // reference speed at mu_ref [m/s]
  Eigen::VectorXd a_x;         // reference longitudinal accel at mu_ref [m/s^2]
  Eigen::VectorXd psi;         // heading [rad]
  Eigen::VectorXd kappa;       // curvature [1/m]
  Eigen::VectorXd nx, ny;      // unit left normal of the centerline
  Eigen::VectorXd d_left;      // margin toward left edge for the vehicle center [m]
  Eigen::VectorXd d_right;     // margin toward right edge [m]
  Eigen::VectorXd offsets;     // lateral offsets from the centerline [m]
  Eigen::VectorXd cx, cy, cw;  // resampled centerline and half-width
  double total_length = 0.0;

  Eigen::Index size() const { return x.size(); }

  /// Linear interpolation along arc length (wrapped).
  void position_at(double s_query, double* px, double* py) const;
  double heading_at(double s_query) const;
  void normal_at(double s_query, double* out_nx, double* out_ny) const;
  void margins_at(double s_query, double* left, double* right) const;
};

/// Speed arrays aligned with the RacingLine points, one per grid friction
/// value; monotone in mu pointwise.
struct VelocityProfileSet {
  Eigen::VectorXd mu_grid;   // ascending
  Eigen::MatrixXd profiles;  // (n_mu x n_points) [m/s]
};

struct RacelineConfig {
  double spacing = 0.03;           // centerline resample step [m]
  int max_iterations = 30;        // linearize/solve sweeps
  double convergence_tol = 1e-9;  // max offset change between sweeps [m]
  double mu_min = 0.4;
  double mu_max = 1.1;
  double mu_step = 0.05;
  bool widths_are_full = false;   // CLI toggle: treat the w column as full width
};

struct RacelineResult {
  RacingLine line;
  double centerline_cost = 0.0;  // sum kappa^2 of the resampled centerline
  double line_cost = 0.0;        // sum kappa^2 of the optimized line
  int iterations = 0;
};

/// Minimum-curvature line: linearizes curvature in the lateral offsets and
/// solves a box-constrained QP, iterated to a fixed point.
RacelineResult min_curvature_raceline(const TrackDefinition& track, double w_veh,
                                      const RacelineConfig& config = {});

/// One extra linearize/solve pass starting from an existing line; used to
/// assert the fixed-point property.
double reoptimize_cost(const TrackDefinition& track, double w_veh, const RacelineConfig& config,
                       const RacingLine& line);

/// Forward-backward velocity profile under a lateral limit mu_eff * g, the
/// friction-circle remainder for longitudinal accel, and drivetrain limits.
Eigen::VectorXd velocity_profile(const RacingLine& line, double mu_eff,
                                 const VehicleGeometry& geom, const DrivetrainParams& drivetrain,
                                 const ActuationLimits& limits);

/// Profiles for every grid value; independent per mu. The parallel mode
/// computes columns concurrently and is bitwise-identical to serial.
VelocityProfileSet velocity_profiles_for_grid(const RacingLine& line,
                                              const Eigen::VectorXd& mu_grid,
                                              const VehicleGeometry& geom,
                                              const DrivetrainParams& drivetrain,
                                              const ActuationLimits& limits,
                                              ExecutionMode mode = ExecutionMode::parallel);

/// Pointwise linear interpolation between bracketing grid profiles; clamps
/// outside the grid and reports it.
struct ProfileLookup {
  Eigen::VectorXd speeds;
  bool clamped = false;
};
ProfileLookup profile_for_mu(const VelocityProfileSet& set, double mu);

/// Drivetrain top speed: positive root of (C_m1 - C_m2 v) d_max = C_roll + C_d v^2.
double drivetrain_top_speed(const DrivetrainParams& drivetrain, double d_max);

/// Fills the line's v_x / a_x columns from the profile at mu_ref.
void attach_reference_profile(RacingLine* line, const VelocityProfileSet& profiles,
                              double mu_ref = 1.0);

/// Raceline artifact (JSON document with the line, centerline and profile
/// family). Round-trips bit-exactly through the text encoding.
struct RacelineArtifact {
  RacingLine line;
  VelocityProfileSet profiles;
};
void save_raceline(const RacelineArtifact& artifact, const std::filesystem::path& file);
RacelineArtifact load_raceline(const std::filesystem::path& file);

}  // namespace elmrace

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
#include <functional>
#include <vector>

#include "elmrace/qp.hpp"
#include "elmrace/raceline.hpp"
#include "elmrace/vehicle.hpp"

namespace elmrace {

/// Discrete-time step map of whichever model the controller tracks with.
using StepFn = std::function<VehicleState(const VehicleState&, const ControlInput&)>;

/// One horizon reference station: target position/speed on the racing line
/// plus the two boundary half-spaces (n . p <= b) at that station.
struct ReferencePoint {
  double s = 0.0;
  double x = 0.0, y = 0.0;
  double speed = 0.0;
  double nx = 0.0, ny = 0.0;  // unit left normal
  double b_left = 0.0;        //  n . p <= b_left
  double b_right = 0.0;       // -n . p <= b_right
};

struct ReferenceTrajectory {
  std::vector<ReferencePoint> points;  // stations k = 1..N
  double s0 = 0.0;                     // projection of the current state
};

/// Projects a pose onto the line and returns its arc length. Equidistant
/// candidates resolve by heading agreement, then by smaller s.
double project_to_s(const RacingLine& line, double px, double py, double phi);

/// Distance from a point to the racing line (segment-projected).
double distance_to_line(const RacingLine& line, double px, double py);

/// Distance to the generating centerline and the local half-width.
struct CenterlineQuery {
  double distance = 0.0;
  double half_width = 0.0;
};
CenterlineQuery centerline_query(const RacingLine& line, double px, double py);

/// Samples horizon references by advancing arc length at the profile speed:
/// s_{k+1} = s_k + v_ref(s_k) dt.
ReferenceTrajectory sample_reference(const RacingLine& line, const Eigen::VectorXd& profile,
                                     const VehicleState& state, int horizon, double dt);

struct MpcWeights {
  Eigen::Matrix2d Q = Eigen::Matrix2d::Identity();
  Eigen::Matrix2d R = (Eigen::Matrix2d() << 0.005, 0.0, 0.0, 1.0).finished();
  double slack_quad = 1e3;  // quadratic slack penalty
  double slack_lin = 1e3;   // linear term makes the penalty exact when feasible
  int horizon = 50;
};

/// Discrete-time affine model x+ = A x + B u + c.
struct LinearModel {
  Eigen::Matrix<double, 7, 7> A;
  Eigen::Matrix<double, 7, 2> B;
  Eigen::Matrix<double, 7, 1> c;
};

/// Central-difference linearization of a step map about (x0, u0).
/// Throws IntegrationError on a non-finite Jacobian.
LinearModel linearize_corrected(const StepFn& f, const VehicleState& x0, const ControlInput& u0,
                                double h = 1e-5);

/// Per-station linearizations along a horizon; stations are independent and
/// the parallel mode is bitwise-identical to serial.
std::vector<LinearModel> linearize_horizon(const StepFn& f,
                                           const std::vector<VehicleState>& states,
                                           const std::vector<ControlInput>& inputs,
                                           ExecutionMode mode = ExecutionMode::parallel);

struct MpcSolutionTrace {
  std::vector<VehicleState> predicted;  // x_1..x_N under the linearized model
  std::vector<ControlInput> controls;   // u_0..u_{N-1}
  Eigen::VectorXd slacks;               // per-station boundary slack
  double solve_time_s = 0.0;            // assembly + QP
  qp::Status qp_status = qp::Status::max_iterations;
  int qp_iterations = 0;
  bool degraded = false;  // QP unusable; previous control shifted instead
  double cost = 0.0;      // realized QP objective

  ControlInput first_control() const { return controls.empty() ? ControlInput{} : controls[0]; }
};

/// Receding-horizon tracker: one linearization about the shifted previous
/// trajectory per call (real-time-iteration style), condensed QP, warm
/// started across calls. One instance per simulation.
class MpcController {
 public:
  MpcController(const MpcWeights& weights, const ActuationLimits& limits, double dt);

  MpcSolutionTrace solve(const ReferenceTrajectory& ref, const VehicleState& x0,
                         const ControlInput& prev_u, const StepFn& model,
                         ExecutionMode mode = ExecutionMode::parallel);

  void reset();

  const MpcWeights& weights() const { return weights_; }

 private:
  MpcWeights weights_;
  ActuationLimits limits_;
  double dt_;
  qp::Solver solver_;
  bool has_previous_ = false;
  std::vector<ControlInput> prev_controls_;
  Eigen::VectorXd prev_z_;
  Eigen::VectorXd prev_y_;
};

}  // namespace elmrace

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
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>

#include "elmrace/elm.hpp"
#include "elmrace/raceline.hpp"
#include "elmrace/vehicle.hpp"

namespace elmrace {

/// Learnable residual-model parameters: resistance constants plus the two
/// ELM output-weight vectors. Packs to the flat vector
/// [C_roll, C_d, beta_f, beta_r] and back without loss.
struct ResidualParams {
  double C_roll = 0.0;
  double C_d = 0.0;
  Eigen::VectorXd beta_f;
  Eigen::VectorXd beta_r;

  Eigen::Index size() const { return 2 + beta_f.size() + beta_r.size(); }
  Eigen::VectorXd pack() const;
  static ResidualParams unpack(const Eigen::VectorXd& p, Eigen::Index n_f, Eigen::Index n_r);
};

struct MomentumState {
  Eigen::VectorXd v;  // same length as the packed parameter vector
  double alpha = 0.002;
  double gamma = 0.9;

  static MomentumState zero(Eigen::Index size, double alpha, double gamma) {
    return MomentumState{Eigen::VectorXd::Zero(size), alpha, gamma};
  }
};

/// One residual observation: the state/control it explains and the measured
/// residual accelerations on the (v_x, v_y, omega) rows.
struct ResidualRecord {
  VehicleState x;
  ControlInput u;
  Eigen::Vector3d e;
  SlopeSignals slope;
};

/// Chronological ring buffer of residual records.
class ResidualDataset {
 public:
  explicit ResidualDataset(std::size_t capacity) : capacity_(capacity) {}

  /// Appends a record; evicts the oldest when full. Non-finite residuals are
  /// rejected and counted instead of stored.
  bool push(const ResidualRecord& record);

  std::size_t size() const { return records_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t rejected() const { return rejected_; }
  const ResidualRecord& operator[](std::size_t i) const { return records_[i]; }

  /// The most recent count records (fewer if the buffer is shorter).
  std::vector<const ResidualRecord*> recent(std::size_t count) const;

 private:
  std::size_t capacity_;
  std::size_t rejected_ = 0;
  std::deque<ResidualRecord> records_;
};

/// Running extrema of observed slip angles; min never increases, max never
/// decreases.
struct SlipRangeTracker {
  double alpha_f_min = std::numeric_limits<double>::infinity();
  double alpha_f_max = -std::numeric_limits<double>::infinity();
  double alpha_r_min = std::numeric_limits<double>::infinity();
  double alpha_r_max = -std::numeric_limits<double>::infinity();

  void update(double alpha_f, double alpha_r) {
    alpha_f_min = std::min(alpha_f_min, alpha_f);
    alpha_f_max = std::max(alpha_f_max, alpha_f);
    alpha_r_min = std::min(alpha_r_min, alpha_r);
    alpha_r_max = std::max(alpha_r_max, alpha_r);
  }
  bool degenerate(double floor) const {
    return !(alpha_f_max - alpha_f_min > floor) || !(alpha_r_max - alpha_r_min > floor);
  }
};

inline constexpr double kSlipRangeFloor = 0.01;  // [rad]

using TireCurve = std::function<double(double)>;

/// Residual prediction with arbitrary tire curves. The second bracket
/// subtracts the nominal coupling terms using the e-kinematic vdot_x and
/// delta_rate = ddelta/dt of the step being explained; slope enters as
/// +-g sin(.) consistent with the dynamic model rows.
Eigen::Vector3d predict_residual_with(const TireCurve& front, const TireCurve& rear, double C_roll,
                                      double C_d, const VehicleState& x, const ControlInput& u,
                                      const SlopeSignals& slope, const VehicleGeometry& geom,
                                      const DrivetrainParams& drivetrain, double dt);

Eigen::Vector3d predict_residual(const ResidualParams& params, const Elm& elm_f, const Elm& elm_r,
                                 const VehicleState& x, const ControlInput& u,
                                 const SlopeSignals& slope, const VehicleGeometry& geom,
                                 const DrivetrainParams& drivetrain, double dt);

/// The residual prediction is linear in the packed parameters:
/// e_pred = J p + b. Returns both pieces.
void residual_jacobian(const Elm& elm_f, const Elm& elm_r, const VehicleState& x,
                       const ControlInput& u, const SlopeSignals& slope,
                       const VehicleGeometry& geom, const DrivetrainParams& drivetrain, double dt,
                       Eigen::Matrix<double, 3, Eigen::Dynamic>* J, Eigen::Vector3d* bias);

/// Sum over the batch of squared errors on the three residual components.
double residual_loss(const ResidualParams& params, const Elm& elm_f, const Elm& elm_r,
                     const std::vector<const ResidualRecord*>& batch, const VehicleGeometry& geom,
                     const DrivetrainParams& drivetrain, double dt);

/// Analytic gradient of residual_loss with respect to the packed parameters.
Eigen::VectorXd residual_loss_gradient(const ResidualParams& params, const Elm& elm_f,
                                       const Elm& elm_r,
                                       const std::vector<const ResidualRecord*>& batch,
                                       const VehicleGeometry& geom,
                                       const DrivetrainParams& drivetrain, double dt);

/// v <- gamma v + (1 - gamma) grad;  p <- p - alpha v.
/// Returns false (and leaves params untouched) on a non-finite gradient.
bool sgd_momentum_step(ResidualParams* params, MomentumState* momentum,
                       const Eigen::VectorXd& grad);

/// Builds a residual record from consecutive measured states: the gap to the
/// discretized e-kinematic prediction on the velocity rows, expressed as
/// accelerations, plus a slip-range update from the observed state.
ResidualRecord observe(const VehicleState& x_k, const ControlInput& u_k,
                       const VehicleState& x_next, const SlopeSignals& slope,
                       const VehicleGeometry& geom, const DrivetrainParams& drivetrain, double dt,
                       RkOrder order, SlipRangeTracker* tracker);

struct MuPrediction {
  double mu = 0.0;
  bool confident = false;
};

/// Friction estimate from the ELM peaks over the observed slip ranges:
/// (max |ELM_f| + max |ELM_r|) / (m g), by dense scan. Falls back to
/// mu_init with confident = false while the range is degenerate.
MuPrediction predict_mu(const Elm& elm_f, const Elm& elm_r, const SlipRangeTracker& tracker,
                        const VehicleGeometry& geom, double mu_init,
                        ExecutionMode mode = ExecutionMode::parallel,
                        double scan_resolution = 0.002);

/// Dense |f| maximum over [lo, hi]. Interior samples lie on an absolute grid
/// of the given resolution, so the maximum is monotone when the range grows.
/// The parallel mode reduces with max and is bitwise-identical to serial.
double scan_abs_max(const std::function<double(double)>& f, double lo, double hi,
                    double resolution, ExecutionMode mode);

/// One corrected-model step: e-kinematic step plus the residual prediction
/// integrated with the same Runge-Kutta scheme on the velocity rows.
VehicleState corrected_step(const ResidualParams& params, const Elm& elm_f, const Elm& elm_r,
                            const VehicleState& x, const ControlInput& u,
                            const SlopeSignals& slope, const VehicleGeometry& geom,
                            const DrivetrainParams& drivetrain, double dt,
                            RkOrder order = RkOrder::sixth);

/// Single-writer learner owning the dataset, parameters and momentum.
/// Controllers consume snapshots; the online update uses a batch-mean,
/// per-component-scaled gradient so the update behaves uniformly across the
/// very different v and omega magnitudes, while residual_loss itself stays
/// a raw sum of squares.
class OnlineLearner {
 public:
  struct Config {
    int n_hidden = 40;
    std::uint64_t seed = 1;
    double alpha = 0.002;
    double gamma = 0.9;
    std::size_t batch_size = 300;  // most recent records per update
    std::size_t dataset_capacity = 20000;
  };

  OnlineLearner(const Config& config, const VehicleGeometry& geom,
                const DrivetrainParams& drivetrain, double dt);

  /// Appends an observation derived from consecutive measured states.
  void observe_transition(const VehicleState& x_k, const ControlInput& u_k,
                          const VehicleState& x_next, const SlopeSignals& slope, RkOrder order);

  /// One gradient step over the most recent batch. Returns the raw batch
  /// loss. No-ops (returning the loss) when the dataset is empty.
  double train_step();

  /// Raw batch loss without updating.
  double batch_loss() const;

  double predict_mu_value(double mu_init, ExecutionMode mode = ExecutionMode::parallel) const;
  MuPrediction predict_mu_full(double mu_init,
                               ExecutionMode mode = ExecutionMode::parallel) const;

  const ResidualParams& params() const { return params_; }
  void set_params(const ResidualParams& p) { params_ = p; }
  const MomentumState& momentum() const { return momentum_; }
  const Elm& elm_front() const { return elm_f_; }
  const Elm& elm_rear() const { return elm_r_; }
  const ResidualDataset& dataset() const { return dataset_; }
  const SlipRangeTracker& tracker() const { return tracker_; }
  SlipRangeTracker& tracker() { return tracker_; }
  const Eigen::Vector3d& component_scales() const { return scales_; }
  std::size_t skipped_updates() const { return skipped_updates_; }

  void save_checkpoint(const std::filesystem::path& file) const;
  void load_checkpoint(const std::filesystem::path& file);

 private:
  Config config_;
  VehicleGeometry geom_;
  DrivetrainParams drivetrain_;
  double dt_;
  Elm elm_f_;
  Elm elm_r_;
  ResidualParams params_;
  MomentumState momentum_;
  ResidualDataset dataset_;
  SlipRangeTracker tracker_;
  Eigen::Vector3d scales_;  // characteristic accelerations per component
  std::size_t skipped_updates_ = 0;
};

}  // namespace elmrace

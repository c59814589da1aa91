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

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "elmrace/estimator.hpp"
#include "elmrace/mpc.hpp"
#include "elmrace/plant.hpp"
#include "elmrace/raceline.hpp"

namespace elmrace {

/// The three ablations: nominal model with fixed speeds, adapted model with
/// fixed speeds, adapted model with friction-adaptive speeds.
enum class ControlMode { no_adaptation, adaptation_const_speeds, adaptation_var_speeds };

const char* to_string(ControlMode mode);
ControlMode control_mode_from_string(const std::string& name);

struct EpisodeConfig {
  double t_f = 36.0;    // episode length [s]
  double t_th = 6.2;    // warm-up threshold [s]
  double mu_init = 1.0;
  OnlineLearner::Config learning;
  MpcWeights weights;
  ControlMode mode = ControlMode::adaptation_var_speeds;
  double mu_filter_lambda = 0.1;  // per-step exponential smoothing of mu_pred
  RkOrder order = RkOrder::sixth;
  ExecutionMode exec = ExecutionMode::parallel;
};

struct RunLogRow {
  double t = 0.0;
  VehicleState state;  // true plant state
  ControlInput u;      // control applied during [t, t+dt)
  double mu_true = 0.0;
  double mu_pred = 0.0;
  double loss = 0.0;
  double solve_ms = 0.0;
  double learn_ms = 0.0;
  bool violation = false;
  int lap = 0;
};

struct LapSummary {
  int index = 0;
  double time_s = 0.0;
  double mean_deviation = 0.0;
};

struct RunLog {
  std::vector<RunLogRow> rows;
  std::vector<LapSummary> laps;     // completed laps only
  double violation_time = 0.0;      // [s]
  double mean_deviation = 0.0;      // over all steps
  bool loss_of_control = false;
  double loss_of_control_time = -1.0;
  double dt = 0.02;
};

/// Per-step observer for tests (parameter-trajectory capture etc.).
using EpisodeObserver = std::function<void(int step, const OnlineLearner&)>;

/// Runs the closed loop: step plant, learn the residual, pick model and
/// friction estimate by warm-up state and mode, sample references at the
/// friction-appropriate speeds, solve the MPC, apply the first control.
RunLog run_episode(const EpisodeConfig& config, Plant& plant, const RacelineArtifact& artifact,
                   const EpisodeObserver& observer = nullptr);

/// Recomputes per-row violation/lap columns and the aggregate metrics from
/// the logged states: lap boundaries by start-line s-wrap crossing, mean
/// deviation to the nearest racing-line point, violation whenever the
/// vehicle center leaves the track.
void lap_metrics(RunLog* log, const RacingLine& line);

void write_runlog_csv(const RunLog& log, const std::filesystem::path& file);
RunLog read_runlog_csv(const std::filesystem::path& file);

/// Summary document: per-lap times, deviations, violation total, timing
/// percentiles.
void write_summary(const RunLog& log, const EpisodeConfig& config,
                   const std::filesystem::path& file);

struct FitReport {
  Eigen::Vector3d rmse_nominal = Eigen::Vector3d::Zero();
  Eigen::Vector3d rmse_trained = Eigen::Vector3d::Zero();
  Eigen::Vector3d reduction = Eigen::Vector3d::Zero();  // 1 - trained/nominal
  bool diverged = false;
  std::string diagnosis;
  std::vector<double> epoch_losses;
  // held-out traces for plotting: actual and predicted residuals
  std::vector<Eigen::Vector3d> actual;
  std::vector<Eigen::Vector3d> predicted;
  ResidualParams params;
};

/// Trains residual parameters on one lap of records (multiple epochs of the
/// online update) and evaluates one-step residual prediction RMSE on a
/// held-out lap, against the nominal (zero-residual) model.
FitReport offline_validate(const std::vector<ResidualRecord>& train,
                           const std::vector<ResidualRecord>& heldout,
                           const OnlineLearner::Config& learn_config, const VehicleGeometry& geom,
                           const DrivetrainParams& drivetrain, double dt, int epochs = 300);

/// Rebuilds residual records from consecutive log rows (measurement pairs).
std::vector<ResidualRecord> records_from_log(const RunLog& log, const VehicleGeometry& geom,
                                             const DrivetrainParams& drivetrain,
                                             const SlopeSignals& slope, RkOrder order);

}  // namespace elmrace

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

#include "elmrace/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace elmrace {

namespace {
using Json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double idx = p * (values.size() - 1);
  const auto lo = static_cast<std::size_t>(idx);
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double f = idx - lo;
  return (1.0 - f) * values[lo] + f * values[hi];
}
}  // namespace

const char* to_string(ControlMode mode) {
  switch (mode) {
    case ControlMode::no_adaptation: return "no-adaptation";
    case ControlMode::adaptation_const_speeds: return "adaptation-const-speeds";
    case ControlMode::adaptation_var_speeds: return "adaptation-var-speeds";
  }
  return "?";
}

ControlMode control_mode_from_string(const std::string& name) {
  if (name == "no-adaptation") return ControlMode::no_adaptation;
  if (name == "adaptation-const-speeds") return ControlMode::adaptation_const_speeds;
  if (name == "adaptation-var-speeds") return ControlMode::adaptation_var_speeds;
  throw ValidationError("unknown mode '" + name + "'");
}

RunLog run_episode(const EpisodeConfig& config, Plant& plant, const RacelineArtifact& artifact,
                   const EpisodeObserver& observer) {
  const RacingLine& line = artifact.line;
  const VehicleParams& veh = plant.config().vehicle;
  const double dt = veh.dt;
  const int n_steps = static_cast<int>(std::round(config.t_f / dt));
  const bool adapting = config.mode != ControlMode::no_adaptation;

  OnlineLearner learner(config.learning, veh.geometry, veh.drivetrain, dt);
  MpcController controller(config.weights, veh.limits, dt);

  RunLog log;
  log.dt = dt;
  log.rows.reserve(n_steps);

  // Standing start on the line at s = 0.
  VehicleState state;
  state.x = line.x[0];
  state.y = line.y[0];
  state.phi = line.psi[0];
  state.v_x = kVxEpsilon;
  VehicleState measurement = state;

  ControlInput u{0.0, 0.0};
  double mu_filtered = config.mu_init;
  const Eigen::VectorXd const_profile = profile_for_mu(artifact.profiles, config.mu_init).speeds;

  // Decision bookkeeping for the row that carries the control being applied.
  double pending_mu = config.mu_init;
  double pending_loss = 0.0;
  double pending_solve_ms = 0.0;
  double pending_learn_ms = 0.0;

  for (int step = 0; step < n_steps; ++step) {
    const double t = step * dt;

    // Row at time t: state at t, control applied over [t, t+dt).
    RunLogRow row;
    row.t = t;
    row.state = state;
    row.u = u;
    row.mu_true = plant.true_mu(t);
    row.mu_pred = pending_mu;
    row.loss = pending_loss;
    row.solve_ms = pending_solve_ms;
    row.learn_ms = pending_learn_ms;
    log.rows.push_back(row);

    const auto result = plant.step(state, u, t);
    const double t_next = (step + 1) * dt;
    if (result.blown_up) {
      log.loss_of_control = true;
      log.loss_of_control_time = t_next;
      break;
    }

    // Learner update from consecutive measurements.
    const auto learn_start = Clock::now();
    learner.observe_transition(measurement, u, result.measurement, plant.config().slope,
                               config.order);
    if (adapting) {
      pending_loss = learner.train_step();
    } else {
      pending_loss = learner.batch_loss();
    }
    pending_learn_ms = ms_since(learn_start);

    state = result.state;
    measurement = result.measurement;

    // Model / friction branch (warm-up uses the nominal model and mu_init).
    const bool warmed_up = t_next > config.t_th;
    pending_mu = config.mu_init;
    if (adapting && warmed_up) {
      const double mu_raw = learner.predict_mu_value(config.mu_init, config.exec);
      mu_filtered = (1.0 - config.mu_filter_lambda) * mu_filtered +
                    config.mu_filter_lambda * mu_raw;
      pending_mu = mu_filtered;
    }

    StepFn model;
    if (adapting && warmed_up) {
      // Snapshot of the learner state for this control step.
      const ResidualParams params = learner.params();
      Elm elm_f = learner.elm_front();
      Elm elm_r = learner.elm_rear();
      const SlopeSignals slope = plant.config().slope;
      const VehicleGeometry geom = veh.geometry;
      const DrivetrainParams drivetrain = veh.drivetrain;
      const RkOrder order = config.order;
      model = [params, elm_f, elm_r, slope, geom, drivetrain, dt, order](
                  const VehicleState& x, const ControlInput& uu) {
        return corrected_step(params, elm_f, elm_r, x, uu, slope, geom, drivetrain, dt, order);
      };
    } else {
      const VehicleGeometry geom = veh.geometry;
      const DrivetrainParams drivetrain = veh.drivetrain;
      const RkOrder order = config.order;
      model = [geom, drivetrain, dt, order](const VehicleState& x, const ControlInput& uu) {
        return ekinematic_step(x, uu, geom, drivetrain, dt, order);
      };
    }

    // Reference at friction-appropriate speeds, then the tracking QP.
    const auto solve_start = Clock::now();
    const Eigen::VectorXd profile =
        (config.mode == ControlMode::adaptation_var_speeds && warmed_up)
            ? profile_for_mu(artifact.profiles, pending_mu).speeds
            : const_profile;
    const ReferenceTrajectory ref =
        sample_reference(line, profile, measurement, config.weights.horizon, dt);
    const MpcSolutionTrace trace = controller.solve(ref, measurement, u, model, config.exec);
    pending_solve_ms = ms_since(solve_start);

    u = trace.first_control();
    u.d = clamp(u.d, veh.limits.d_min, veh.limits.d_max);
    u.ddelta = clamp(u.ddelta, veh.limits.ddelta_min, veh.limits.ddelta_max);

    if (observer) observer(step, learner);
  }

  lap_metrics(&log, line);
  return log;
}

void lap_metrics(RunLog* log, const RacingLine& line) {
  log->laps.clear();
  log->violation_time = 0.0;
  log->mean_deviation = 0.0;
  if (log->rows.empty()) return;

  const double L = line.total_length;
  double progress = 0.0;
  double s_prev = project_to_s(line, log->rows.front().state.x, log->rows.front().state.y,
                               log->rows.front().state.phi);
  // Standing start: lap 0 timing begins at episode start.
  double lap_start = 0.0;
  int lap_index = 0;
  double deviation_sum = 0.0;
  double lap_dev_sum = 0.0;
  int lap_steps = 0;

  for (auto& row : log->rows) {
    const double s_now = project_to_s(line, row.state.x, row.state.y, row.state.phi);
    double ds = s_now - s_prev;
    if (ds > L / 2) ds -= L;
    if (ds < -L / 2) ds += L;
    progress += ds;
    s_prev = s_now;

    const int lap_now = std::max(0, static_cast<int>(std::floor(progress / L)));
    if (lap_now > lap_index) {
      log->laps.push_back(
          {lap_index, row.t - lap_start, lap_steps > 0 ? lap_dev_sum / lap_steps : 0.0});
      lap_index = lap_now;
      lap_start = row.t;
      lap_dev_sum = 0.0;
      lap_steps = 0;
    }
    row.lap = lap_index;

    const double dev = distance_to_line(line, row.state.x, row.state.y);
    deviation_sum += dev;
    lap_dev_sum += dev;
    ++lap_steps;

    const CenterlineQuery cq = centerline_query(line, row.state.x, row.state.y);
    row.violation = cq.distance > cq.half_width;
    if (row.violation) log->violation_time += log->dt;
  }
  log->mean_deviation = deviation_sum / static_cast<double>(log->rows.size());
}

void write_runlog_csv(const RunLog& log, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw ParseError("cannot write run log: " + file.string());
  out.precision(17);
  out << "t,x,y,phi,vx,vy,omega,delta,d,ddelta,mu_true,mu_pred,loss,solve_ms,violation,lap\n";
  for (const auto& row : log.rows) {
    out << row.t << ',' << row.state.x << ',' << row.state.y << ',' << row.state.phi << ','
        << row.state.v_x << ',' << row.state.v_y << ',' << row.state.omega << ','
        << row.state.delta << ',' << row.u.d << ',' << row.u.ddelta << ',' << row.mu_true << ','
        << row.mu_pred << ',' << row.loss << ',' << row.solve_ms << ',' << (row.violation ? 1 : 0)
        << ',' << row.lap << '\n';
  }
}

RunLog read_runlog_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open run log: " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(file.string() + ": empty file");
  RunLog log;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::string cell;
    double vals[16];
    for (int c = 0; c < 16; ++c) {
      if (!std::getline(ss, cell, ',')) {
        throw ParseError(file.string() + ":" + std::to_string(line_no) +
                         ": expected 16 columns, got " + std::to_string(c));
      }
      try {
        vals[c] = std::stod(cell);
      } catch (const std::exception&) {
        throw ParseError(file.string() + ":" + std::to_string(line_no) + ": bad number '" + cell +
                         "'");
      }
    }
    RunLogRow row;
    row.t = vals[0];
    row.state = {vals[1], vals[2], vals[3], vals[4], vals[5], vals[6], vals[7]};
    row.u = {vals[8], vals[9]};
    row.mu_true = vals[10];
    row.mu_pred = vals[11];
    row.loss = vals[12];
    row.solve_ms = vals[13];
    row.violation = vals[14] != 0.0;
    row.lap = static_cast<int>(vals[15]);
    log.rows.push_back(row);
  }
  if (log.rows.size() >= 2) log.dt = log.rows[1].t - log.rows[0].t;
  return log;
}

void write_summary(const RunLog& log, const EpisodeConfig& config,
                   const std::filesystem::path& file) {
  Json doc;
  doc["mode"] = to_string(config.mode);
  doc["t_f"] = config.t_f;
  doc["t_th"] = config.t_th;
  doc["mu_init"] = config.mu_init;
  doc["seed"] = config.learning.seed;
  Json laps = Json::array();
  for (const auto& lap : log.laps) {
    laps.push_back({{"lap", lap.index}, {"time_s", lap.time_s},
                    {"mean_deviation_m", lap.mean_deviation}});
  }
  doc["laps"] = laps;
  doc["mean_deviation_m"] = log.mean_deviation;
  doc["violation_time_s"] = log.violation_time;
  doc["loss_of_control"] = log.loss_of_control;
  if (log.loss_of_control) doc["loss_of_control_time_s"] = log.loss_of_control_time;

  std::vector<double> solve, learn;
  solve.reserve(log.rows.size());
  for (const auto& row : log.rows) {
    solve.push_back(row.solve_ms);
    learn.push_back(row.learn_ms);
  }
  doc["solve_ms"] = {{"p50", percentile(solve, 0.5)},
                     {"p99", percentile(solve, 0.99)},
                     {"max", solve.empty() ? 0.0 : *std::max_element(solve.begin(), solve.end())}};
  doc["learn_ms"] = {{"p50", percentile(learn, 0.5)},
                     {"p99", percentile(learn, 0.99)},
                     {"max", learn.empty() ? 0.0 : *std::max_element(learn.begin(), learn.end())}};

  std::ofstream out(file);
  if (!out) throw ParseError("cannot write summary: " + file.string());
  out << doc.dump(1, '\t') << "\n";
}

std::vector<ResidualRecord> records_from_log(const RunLog& log, const VehicleGeometry& geom,
                                             const DrivetrainParams& drivetrain,
                                             const SlopeSignals& slope, RkOrder order) {
  std::vector<ResidualRecord> records;
  if (log.rows.size() < 2) return records;
  records.reserve(log.rows.size() - 1);
  for (std::size_t i = 0; i + 1 < log.rows.size(); ++i) {
    // Row i's control is the one applied over [t_i, t_{i+1}).
    const VehicleState& x_k = log.rows[i].state;
    const ControlInput& u_k = log.rows[i].u;
    const VehicleState& x_next = log.rows[i + 1].state;
    records.push_back(observe(x_k, u_k, x_next, slope, geom, drivetrain, log.dt, order, nullptr));
  }
  return records;
}

FitReport offline_validate(const std::vector<ResidualRecord>& train,
                           const std::vector<ResidualRecord>& heldout,
                           const OnlineLearner::Config& learn_config, const VehicleGeometry& geom,
                           const DrivetrainParams& drivetrain, double dt, int epochs) {
  if (train.empty() || heldout.empty()) {
    throw ValidationError("offline_validate needs non-empty train and held-out sets");
  }
  OnlineLearner learner(learn_config, geom, drivetrain, dt);
  // Replay the stream into the dataset (capacity at least the lap length).
  OnlineLearner::Config cfg = learn_config;
  (void)cfg;

  FitReport report;
  const Elm& elm_f = learner.elm_front();
  const Elm& elm_r = learner.elm_rear();

  ResidualParams params = learner.params();
  MomentumState momentum =
      MomentumState::zero(params.size(), learn_config.alpha, learn_config.gamma);
  const Eigen::Vector3d scales = learner.component_scales();

  const std::size_t batch = std::max<std::size_t>(1, learn_config.batch_size);
  double min_epoch_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t start = 0;
    int batches = 0;
    while (start < train.size()) {
      const std::size_t end = std::min(start + batch, train.size());
      std::vector<const ResidualRecord*> view;
      view.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) view.push_back(&train[i]);

      const Eigen::VectorXd p = params.pack();
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(p.size());
      Eigen::Matrix<double, 3, Eigen::Dynamic> J;
      Eigen::Vector3d bias;
      double loss = 0.0;
      for (const ResidualRecord* rec : view) {
        residual_jacobian(elm_f, elm_r, rec->x, rec->u, rec->slope, geom, drivetrain, dt, &J,
                          &bias);
        const Eigen::Vector3d err = rec->e - (J * p + bias);
        loss += err.squaredNorm();
        Eigen::Vector3d scaled = err;
        scaled.array() /= scales.array().square();
        grad.noalias() -= 2.0 * J.transpose() * scaled;
      }
      grad /= static_cast<double>(view.size());
      sgd_momentum_step(&params, &momentum, grad);
      epoch_loss += loss;
      ++batches;
      start = end;
    }
    report.epoch_losses.push_back(epoch_loss);
    if (epoch_loss > 10.0 * min_epoch_loss) {
      report.diverged = true;
      report.diagnosis = "training loss increased more than tenfold over an epoch (epoch " +
                         std::to_string(epoch) + ")";
      break;
    }
    min_epoch_loss = std::min(min_epoch_loss, epoch_loss);
  }

  report.params = params;
  Eigen::Vector3d sq_nominal = Eigen::Vector3d::Zero();
  Eigen::Vector3d sq_trained = Eigen::Vector3d::Zero();
  Eigen::Matrix<double, 3, Eigen::Dynamic> J;
  Eigen::Vector3d bias;
  const Eigen::VectorXd p = params.pack();
  for (const auto& rec : heldout) {
    residual_jacobian(elm_f, elm_r, rec.x, rec.u, rec.slope, geom, drivetrain, dt, &J, &bias);
    const Eigen::Vector3d pred = J * p + bias;
    report.actual.push_back(rec.e);
    report.predicted.push_back(pred);
    sq_nominal += rec.e.cwiseAbs2();
    sq_trained += (rec.e - pred).cwiseAbs2();
  }
  const double n = static_cast<double>(heldout.size());
  report.rmse_nominal = (sq_nominal / n).cwiseSqrt();
  report.rmse_trained = (sq_trained / n).cwiseSqrt();
  for (int c = 0; c < 3; ++c) {
    report.reduction[c] =
        report.rmse_nominal[c] > 0 ? 1.0 - report.rmse_trained[c] / report.rmse_nominal[c] : 0.0;
  }
  return report;
}

}  // namespace elmrace

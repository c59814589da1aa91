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

#include "elmrace/mpc.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>

namespace elmrace {

namespace {

struct Projection {
  double s = 0.0;
  double distance = std::numeric_limits<double>::infinity();
  Eigen::Index segment = 0;
};

// Nearest point on the closed polyline (x[i], y[i]) -> s. Keeps every
// near-tie so callers can apply the heading rule.
Projection project_point(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& s, double total_length, double px, double py,
                         const double* phi, const Eigen::VectorXd* psi) {
  const Eigen::Index n = x.size();
  struct Candidate {
    double dist, s, heading_agreement;
  };
  std::vector<Candidate> near;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = (i + 1) % n;
    const double ax = x[i], ay = y[i];
    const double bx = x[j], by = y[j];
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double cx = ax + t * vx, cy = ay + t * vy;
    const double d = std::hypot(px - cx, py - cy);
    const double seg_len = (j == 0 ? total_length : s[j]) - s[i];
    const double s_here = s[i] + t * seg_len;
    double agree = 0.0;
    if (phi && psi) {
      const double heading = std::atan2(vy, vx);
      agree = std::cos(heading - *phi);
    }
    if (d < best - 1e-9) {
      best = d;
      near.clear();
      near.push_back({d, s_here, agree});
    } else if (d <= best + 1e-9) {
      near.push_back({d, s_here, agree});
    }
  }
  Projection out;
  out.distance = best;
  // heading agreement first, then smaller s
  double best_agree = -2.0;
  double best_s = std::numeric_limits<double>::infinity();
  for (const auto& c : near) {
    if (c.heading_agreement > best_agree + 1e-12 ||
        (std::abs(c.heading_agreement - best_agree) <= 1e-12 && c.s < best_s)) {
      best_agree = c.heading_agreement;
      best_s = c.s;
    }
  }
  out.s = best_s;
  return out;
}

}  // namespace

double project_to_s(const RacingLine& line, double px, double py, double phi) {
  return project_point(line.x, line.y, line.s, line.total_length, px, py, &phi, &line.psi).s;
}

double distance_to_line(const RacingLine& line, double px, double py) {
  return project_point(line.x, line.y, line.s, line.total_length, px, py, nullptr, nullptr)
      .distance;
}

CenterlineQuery centerline_query(const RacingLine& line, double px, double py) {
  const Eigen::Index n = line.cx.size();
  // arc length bookkeeping over the centerline polyline
  CenterlineQuery out;
  double best = std::numeric_limits<double>::infinity();
  double w_at = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = (i + 1) % n;
    const double ax = line.cx[i], ay = line.cy[i];
    const double vx = line.cx[j] - ax, vy = line.cy[j] - ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double d = std::hypot(px - (ax + t * vx), py - (ay + t * vy));
    if (d < best) {
      best = d;
      w_at = (1.0 - t) * line.cw[i] + t * line.cw[j];
    }
  }
  out.distance = best;
  out.half_width = w_at;
  return out;
}

ReferenceTrajectory sample_reference(const RacingLine& line, const Eigen::VectorXd& profile,
                                     const VehicleState& state, int horizon, double dt) {
  if (profile.size() != line.size()) {
    throw ValidationError("sample_reference: profile length must match the line");
  }
  auto speed_at = [&](double s_query) {
    const Eigen::Index n = line.size();
    double sq = std::fmod(s_query, line.total_length);
    if (sq < 0) sq += line.total_length;
    const auto it = std::upper_bound(line.s.data(), line.s.data() + n, sq);
    Eigen::Index i = std::max<Eigen::Index>(0, it - line.s.data() - 1);
    const Eigen::Index j = (i + 1) % n;
    const double seg = (j == 0 ? line.total_length : line.s[j]) - line.s[i];
    const double f = seg > 0 ? (sq - line.s[i]) / seg : 0.0;
    return (1.0 - f) * profile[i] + f * profile[j];
  };

  ReferenceTrajectory ref;
  ref.s0 = project_to_s(line, state.x, state.y, state.phi);
  ref.points.reserve(horizon);
  double s = ref.s0;
  for (int k = 0; k < horizon; ++k) {
    s += speed_at(s) * dt;  // exact arc-length bookkeeping
    ReferencePoint pt;
    pt.s = s;
    line.position_at(s, &pt.x, &pt.y);
    pt.speed = speed_at(s);
    double nx, ny;
    line.normal_at(s, &nx, &ny);
    pt.nx = nx;
    pt.ny = ny;
    double d_left, d_right;
    line.margins_at(s, &d_left, &d_right);
    pt.b_left = nx * pt.x + ny * pt.y + d_left;
    pt.b_right = -(nx * pt.x + ny * pt.y) + d_right;
    ref.points.push_back(pt);
  }
  return ref;
}

LinearModel linearize_corrected(const StepFn& f, const VehicleState& x0, const ControlInput& u0,
                                double h) {
  LinearModel model;
  for (int j = 0; j < 7; ++j) {
    VehicleState::Vector vp = x0.to_vector(), vm = x0.to_vector();
    vp[j] += h;
    vm[j] -= h;
    const VehicleState::Vector fp = f(VehicleState::from_vector(vp), u0).to_vector();
    const VehicleState::Vector fm = f(VehicleState::from_vector(vm), u0).to_vector();
    model.A.col(j) = (fp - fm) / (2.0 * h);
  }
  for (int j = 0; j < 2; ++j) {
    ControlInput up = u0, um = u0;
    (j == 0 ? up.d : up.ddelta) += h;
    (j == 0 ? um.d : um.ddelta) -= h;
    const VehicleState::Vector fp = f(x0, up).to_vector();
    const VehicleState::Vector fm = f(x0, um).to_vector();
    model.B.col(j) = (fp - fm) / (2.0 * h);
  }
  if (!model.A.allFinite() || !model.B.allFinite()) {
    throw IntegrationError("non-finite Jacobian in model linearization");
  }
  model.c = f(x0, u0).to_vector() - model.A * x0.to_vector() - model.B * Eigen::Vector2d(u0.d, u0.ddelta);
  return model;
}

std::vector<LinearModel> linearize_horizon(const StepFn& f,
                                           const std::vector<VehicleState>& states,
                                           const std::vector<ControlInput>& inputs,
                                           ExecutionMode mode) {
  if (states.size() != inputs.size()) {
    throw ValidationError("linearize_horizon: states/inputs size mismatch");
  }
  const auto n = static_cast<Eigen::Index>(states.size());
  std::vector<LinearModel> models(states.size());
  if (mode == ExecutionMode::parallel) {
#pragma omp parallel for schedule(static)
    for (Eigen::Index k = 0; k < n; ++k) {
      models[k] = linearize_corrected(f, states[k], inputs[k]);
    }
  } else {
    for (Eigen::Index k = 0; k < n; ++k) {
      models[k] = linearize_corrected(f, states[k], inputs[k]);
    }
  }
  return models;
}

MpcController::MpcController(const MpcWeights& weights, const ActuationLimits& limits, double dt)
    : weights_(weights), limits_(limits), dt_(dt) {
  // Control-grade tolerances: the first control is applied at actuator
  // resolution, so micro-converging the duals buys nothing per step.
  qp::Settings settings;
  settings.eps_abs = 3e-5;
  settings.eps_rel = 1e-4;
  settings.max_iterations = 1500;
  solver_ = qp::Solver(settings);
}

void MpcController::reset() {
  has_previous_ = false;
  prev_controls_.clear();
  prev_z_.resize(0);
  prev_y_.resize(0);
}

MpcSolutionTrace MpcController::solve(const ReferenceTrajectory& ref, const VehicleState& x0,
                                      const ControlInput& prev_u, const StepFn& model,
                                      ExecutionMode mode) {
  const auto t_start = std::chrono::steady_clock::now();
  const int N = weights_.horizon;
  if (static_cast<int>(ref.points.size()) != N) {
    throw ValidationError("solve expects a reference with horizon points");
  }

  // Linearization trajectory: nonlinear rollout from the measured state
  // under the previous controls shifted one step (previous applied control
  // held on the first call). Rolling out keeps every expansion point
  // consistent with a reachable trajectory.
  std::vector<VehicleState> lin_states(N);
  std::vector<ControlInput> lin_inputs(N);
  for (int k = 0; k < N; ++k) {
    lin_inputs[k] = has_previous_ ? prev_controls_[std::min(k + 1, N - 1)]
                                  : ControlInput{prev_u.d, 0.0};
  }
  lin_states[0] = x0;
  for (int k = 0; k + 1 < N; ++k) {
    lin_states[k + 1] = model(lin_states[k], lin_inputs[k]);
    // same actuator clamp the plant applies
    lin_states[k + 1].delta =
        clamp(lin_states[k + 1].delta, limits_.delta_min, limits_.delta_max);
    if (!lin_states[k + 1].all_finite()) {
      lin_states[k + 1] = lin_states[k];
      lin_inputs[k + 1] = ControlInput{0.0, 0.0};
    }
  }

  const std::vector<LinearModel> models = linearize_horizon(model, lin_states, lin_inputs, mode);

  // Condensed propagation: x_k = F_k + sum_j G[k][j] u_j (k = 1..N).
  const int nu = 2 * N;
  const int nz = nu + N;  // controls + per-station slack
  std::vector<Eigen::Matrix<double, 7, Eigen::Dynamic>> G(N + 1);
  std::vector<Eigen::Matrix<double, 7, 1>> F(N + 1);
  F[0] = x0.to_vector();
  G[0] = Eigen::Matrix<double, 7, Eigen::Dynamic>::Zero(7, nu);
  for (int k = 0; k < N; ++k) {
    F[k + 1] = models[k].A * F[k] + models[k].c;
    G[k + 1] = models[k].A * G[k];
    G[k + 1].block<7, 2>(0, 2 * k) += models[k].B;
  }

  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(nz, nz);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(nz);

  // tracking cost over positions
  for (int k = 1; k <= N; ++k) {
    const auto Gp = G[k].topRows<2>();  // 2 x nu
    const Eigen::Vector2d offset(F[k][0] - ref.points[k - 1].x, F[k][1] - ref.points[k - 1].y);
    P.topLeftCorner(nu, nu).noalias() += 2.0 * Gp.transpose() * weights_.Q * Gp;
    q.head(nu).noalias() += 2.0 * Gp.transpose() * weights_.Q * offset;
  }
  // actuation cost on (d_k - d_{k-1}, ddelta_k)
  for (int k = 0; k < N; ++k) {
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(2, nu);
    T(0, 2 * k) = 1.0;
    if (k > 0) T(0, 2 * (k - 1)) = -1.0;
    T(1, 2 * k + 1) = 1.0;
    Eigen::Vector2d t0(k == 0 ? -prev_u.d : 0.0, 0.0);
    P.topLeftCorner(nu, nu).noalias() += 2.0 * T.transpose() * weights_.R * T;
    q.head(nu).noalias() += 2.0 * T.transpose() * weights_.R * t0;
  }
  // slack penalty
  for (int k = 0; k < N; ++k) {
    P(nu + k, nu + k) += 2.0 * weights_.slack_quad;
    q[nu + k] += weights_.slack_lin;
  }

  // inequality rows: 2N boundary half-spaces, 2N steering box
  const int m = 4 * N;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, nz);
  Eigen::VectorXd b(m);
  for (int k = 1; k <= N; ++k) {
    // Each step is constrained by the corridor of the reference station
    // nearest to its rollout position. While catching up to the references
    // the car runs behind them, and the station at the same index would
    // hand it a corridor from a different part of the track.
    const VehicleState& anchor = lin_states[std::min(k, N - 1)];
    std::size_t nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < ref.points.size(); ++j) {
      const double d = std::hypot(ref.points[j].x - anchor.x, ref.points[j].y - anchor.y);
      if (d < best) {
        best = d;
        nearest = j;
      }
    }
    const auto& pt = ref.points[nearest];
    const Eigen::RowVector2d nrm(pt.nx, pt.ny);
    const Eigen::RowVectorXd npos = nrm * G[k].topRows<2>();
    const double nF = nrm * F[k].head<2>();
    const int r0 = 2 * (k - 1);
    A.block(r0, 0, 1, nu) = npos;
    A(r0, nu + (k - 1)) = -1.0;
    b[r0] = pt.b_left - nF;
    A.block(r0 + 1, 0, 1, nu) = -npos;
    A(r0 + 1, nu + (k - 1)) = -1.0;
    b[r0 + 1] = pt.b_right + nF;
  }
  for (int k = 1; k <= N; ++k) {
    const int r0 = 2 * N + 2 * (k - 1);
    const Eigen::RowVectorXd drow = G[k].row(6);
    A.block(r0, 0, 1, nu) = drow;
    b[r0] = limits_.delta_max - F[k][6];
    A.block(r0 + 1, 0, 1, nu) = -drow;
    b[r0 + 1] = -(limits_.delta_min - F[k][6]);
  }

  // Actuation boxes intersected with a wide trust region around the rollout
  // inputs. The linearization is only valid near the rollout; the bound is
  // sized as a safety net against far-horizon sensitivity blowups (products
  // of fifty stage Jacobians), wide enough to stay inactive in normal
  // operation so it cannot ratchet the plan.
  const double trust_d = 2.0;
  const double trust_dd = 0.08;
  Eigen::VectorXd lb = Eigen::VectorXd::Constant(nz, -qp::kInf);
  Eigen::VectorXd ub = Eigen::VectorXd::Constant(nz, qp::kInf);
  for (int k = 0; k < N; ++k) {
    lb[2 * k] = std::max(limits_.d_min, lin_inputs[k].d - trust_d);
    ub[2 * k] = std::min(limits_.d_max, lin_inputs[k].d + trust_d);
    lb[2 * k + 1] = std::max(limits_.ddelta_min, lin_inputs[k].ddelta - trust_dd);
    ub[2 * k + 1] = std::min(limits_.ddelta_max, lin_inputs[k].ddelta + trust_dd);
    lb[nu + k] = 0.0;
  }

  qp::Problem problem;
  problem.P = std::move(P);
  problem.q = std::move(q);
  problem.A = std::move(A);
  problem.b = std::move(b);
  problem.lb = std::move(lb);
  problem.ub = std::move(ub);

  std::optional<Eigen::VectorXd> warm_z, warm_y;
  if (prev_z_.size() == nz) warm_z = prev_z_;
  if (prev_y_.size() == m + nz) warm_y = prev_y_;
  const qp::Solution sol = solver_.solve(problem, warm_z, warm_y);

  // Offline-debugging hooks: dump the first problem the solver struggled
  // on, or the n-th solve regardless of status.
  if (const char* dump_path = std::getenv("ELMRACE_QP_DUMP")) {
    static bool dumped = false;
    static int solve_count = 0;
    ++solve_count;
    const char* step_env = std::getenv("ELMRACE_QP_DUMP_STEP");
    const bool want = step_env ? (solve_count - 1 == std::atoi(step_env))
                               : sol.status != qp::Status::solved;
    if (!dumped && want) {
      dumped = true;
      std::ofstream out(dump_path);
      qp::dump_problem(problem, out);
    }
  }

  MpcSolutionTrace trace;
  trace.qp_status = sol.status;
  trace.qp_iterations = sol.iterations;

  const bool usable = sol.z.allFinite() && sol.status != qp::Status::infeasible &&
                      (sol.status == qp::Status::solved ||
                       std::max(sol.primal_residual, sol.dual_residual) < 1e-2);
  if (!usable) {
    trace.degraded = true;
    trace.controls.resize(N);
    for (int k = 0; k < N; ++k) {
      trace.controls[k] =
          has_previous_ ? prev_controls_[std::min(k + 1, N - 1)] : ControlInput{0.0, 0.0};
    }
    trace.predicted = lin_states;
    trace.slacks = Eigen::VectorXd::Zero(N);
  } else {
    trace.controls.resize(N);
    for (int k = 0; k < N; ++k) {
      trace.controls[k].d = clamp(sol.z[2 * k], limits_.d_min, limits_.d_max);
      trace.controls[k].ddelta = clamp(sol.z[2 * k + 1], limits_.ddelta_min, limits_.ddelta_max);
    }
    trace.slacks = sol.z.tail(N).cwiseMax(0.0);
    trace.predicted.resize(N);
    Eigen::VectorXd u_flat = sol.z.head(nu);
    for (int k = 1; k <= N; ++k) {
      trace.predicted[k - 1] =
          VehicleState::from_vector(F[k] + G[k] * u_flat);
    }
    trace.cost = 0.5 * sol.z.dot(problem.P * sol.z) + problem.q.dot(sol.z);
    prev_controls_.assign(trace.controls.begin(), trace.controls.end());
    prev_z_ = sol.z;
    prev_y_.resize(m + nz);
    prev_y_.head(m) = sol.lambda;
    prev_y_.tail(nz) = sol.bound_duals;
    has_previous_ = true;
  }

  trace.solve_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return trace;
}

}  // namespace elmrace

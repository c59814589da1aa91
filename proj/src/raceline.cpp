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

#include "elmrace/raceline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "elmrace/qp.hpp"

namespace elmrace {

namespace {

using Json = nlohmann::json;

// Wrapped index helper.
inline Eigen::Index wrap(Eigen::Index i, Eigen::Index n) { return ((i % n) + n) % n; }

// Unit left normals of a closed polyline from central differences.
void left_normals(const Eigen::VectorXd& x, const Eigen::VectorXd& y, Eigen::VectorXd* nx,
                  Eigen::VectorXd* ny) {
  const Eigen::Index n = x.size();
  nx->resize(n);
  ny->resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index ip = wrap(i + 1, n), im = wrap(i - 1, n);
    double tx = x[ip] - x[im];
    double ty = y[ip] - y[im];
    const double norm = std::hypot(tx, ty);
    tx /= norm;
    ty /= norm;
    (*nx)[i] = -ty;
    (*ny)[i] = tx;
  }
}

// First-order model of the offset line's curvature around the current line:
// kappa(alpha) ~ k0 + M (alpha - alpha0). Derivatives come from nonuniform
// central differences in the current chord parameterization; the expansion
// keeps the first-derivative and normalization terms, so the directional
// derivative is exact (pure inflation of a circle lowers kappa).
struct CurvatureLinearization {
  Eigen::VectorXd k0;
  Eigen::MatrixXd M;
};

CurvatureLinearization linearize_curvature(const Eigen::VectorXd& nx, const Eigen::VectorXd& ny,
                                           const Eigen::VectorXd& px, const Eigen::VectorXd& py) {
  const Eigen::Index n = px.size();
  CurvatureLinearization lin;
  lin.k0.resize(n);
  lin.M = Eigen::MatrixXd::Zero(n, n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index ip = wrap(i + 1, n), im = wrap(i - 1, n);
    const double h1 = std::hypot(px[i] - px[im], py[i] - py[im]);
    const double h2 = std::hypot(px[ip] - px[i], py[ip] - py[i]);
    // nonuniform 3-point first and second difference weights
    const double d1m = -h2 / (h1 * (h1 + h2));
    const double d1i = (h2 - h1) / (h1 * h2);
    const double d1p = h1 / (h2 * (h1 + h2));
    const double denom = h1 * h2 * (h1 + h2);
    const double d2m = 2.0 * h2 / denom;
    const double d2i = -2.0 * (h1 + h2) / denom;
    const double d2p = 2.0 * h1 / denom;

    const double xp = d1m * px[im] + d1i * px[i] + d1p * px[ip];
    const double yp = d1m * py[im] + d1i * py[i] + d1p * py[ip];
    const double xpp = d2m * px[im] + d2i * px[i] + d2p * px[ip];
    const double ypp = d2m * py[im] + d2i * py[i] + d2p * py[ip];

    const double N = xp * ypp - yp * xpp;
    const double D = xp * xp + yp * yp;
    const double D32 = std::pow(D, 1.5);
    lin.k0[i] = N / D32;

    const Eigen::Index cols[3] = {im, i, ip};
    const double w1[3] = {d1m, d1i, d1p};
    const double w2[3] = {d2m, d2i, d2p};
    for (int c = 0; c < 3; ++c) {
      const Eigen::Index j = cols[c];
      const double dxp = w1[c] * nx[j];
      const double dyp = w1[c] * ny[j];
      const double dxpp = w2[c] * nx[j];
      const double dypp = w2[c] * ny[j];
      const double dN = dxp * ypp + xp * dypp - dyp * xpp - yp * dxpp;
      const double dD = 2.0 * (xp * dxp + yp * dyp);
      lin.M(i, j) += (dN - 1.5 * N * dD / D) / D32;
    }
  }
  return lin;
}

// One linearize/solve sweep; returns the updated offsets.
Eigen::VectorXd raceline_sweep(const ResampledTrack& center, const Eigen::VectorXd& nx,
                               const Eigen::VectorXd& ny, const Eigen::VectorXd& bound,
                               const Eigen::VectorXd& alpha) {
  Eigen::VectorXd px = center.x + alpha.cwiseProduct(nx);
  Eigen::VectorXd py = center.y + alpha.cwiseProduct(ny);
  CurvatureLinearization lin = linearize_curvature(nx, ny, px, py);

  // Gauss-Newton step in delta = alpha_new - alpha, box-constrained to the
  // remaining lateral room. The objective is normalized so the solver's
  // residual thresholds are scale-free.
  qp::Problem problem;
  problem.P = 2.0 * lin.M.transpose() * lin.M;
  problem.q = 2.0 * lin.M.transpose() * lin.k0;
  const double objective_scale = std::max(1.0, problem.q.lpNorm<Eigen::Infinity>());
  problem.P /= objective_scale;
  problem.q /= objective_scale;
  problem.lb = -bound - alpha;
  problem.ub = bound - alpha;

  qp::Solution sol = qp::solve_box_newton(problem);
  if (sol.status != qp::Status::solved) {
    throw SolveError("raceline QP did not converge: dual residual " +
                     std::to_string(sol.dual_residual));
  }
  return (alpha + sol.z).cwiseMax(-bound).cwiseMin(bound);
}

// Full line geometry (arc length, heading, curvature) from spline fits of
// the offset points.
void finalize_geometry(const ResampledTrack& center, const Eigen::VectorXd& nx,
                       const Eigen::VectorXd& ny, const Eigen::VectorXd& alpha, double margin,
                       RacingLine* line) {
  const Eigen::Index n = center.x.size();
  line->x = center.x + alpha.cwiseProduct(nx);
  line->y = center.y + alpha.cwiseProduct(ny);
  line->offsets = alpha;
  line->nx = nx;
  line->ny = ny;
  line->cx = center.x;
  line->cy = center.y;
  line->cw = center.w;

  PeriodicSpline spline(line->x, line->y);
  line->s.resize(n);
  line->psi.resize(n);
  line->kappa.resize(n);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i > 0) acc += std::hypot(line->x[i] - line->x[i - 1], line->y[i] - line->y[i - 1]);
    line->s[i] = acc;
    double dx, dy, ddx, ddy;
    spline.derivatives(spline.knots()[i], &dx, &dy, &ddx, &ddy);
    line->psi[i] = std::atan2(dy, dx);
    line->kappa[i] = spline.curvature(spline.knots()[i]);
  }
  line->total_length =
      acc + std::hypot(line->x[0] - line->x[n - 1], line->y[0] - line->y[n - 1]);

  line->d_left.resize(n);
  line->d_right.resize(n);
  const double floor = 1e-3;  // keep the reference strictly inside each half-space
  for (Eigen::Index i = 0; i < n; ++i) {
    line->d_left[i] = std::max(center.w[i] - margin - alpha[i], floor);
    line->d_right[i] = std::max(center.w[i] - margin + alpha[i], floor);
  }
}

double spline_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const Eigen::VectorXd kappa = curvature_profile(x, y);
  return kappa.squaredNorm();
}

}  // namespace

void RacingLine::position_at(double s_query, double* px, double* py) const {
  const Eigen::Index n = size();
  double sq = std::fmod(s_query, total_length);
  if (sq < 0) sq += total_length;
  const auto it = std::upper_bound(s.data(), s.data() + n, sq);
  Eigen::Index i = std::max<Eigen::Index>(0, it - s.data() - 1);
  const Eigen::Index j = wrap(i + 1, n);
  const double seg = (j == 0 ? total_length : s[j]) - s[i];
  const double f = seg > 0 ? (sq - s[i]) / seg : 0.0;
  *px = (1.0 - f) * x[i] + f * x[j];
  *py = (1.0 - f) * y[i] + f * y[j];
}

namespace {
// Shared interpolation pattern over wrapped arc length.
template <typename Getter>
double interp_wrapped(const RacingLine& line, double s_query, Getter&& get) {
  const Eigen::Index n = line.size();
  double sq = std::fmod(s_query, line.total_length);
  if (sq < 0) sq += line.total_length;
  const auto it = std::upper_bound(line.s.data(), line.s.data() + n, sq);
  Eigen::Index i = std::max<Eigen::Index>(0, it - line.s.data() - 1);
  const Eigen::Index j = wrap(i + 1, n);
  const double seg = (j == 0 ? line.total_length : line.s[j]) - line.s[i];
  const double f = seg > 0 ? (sq - line.s[i]) / seg : 0.0;
  return (1.0 - f) * get(i) + f * get(j);
}
}  // namespace

double RacingLine::heading_at(double s_query) const {
  // interpolate on the unit circle to avoid wrap errors
  const double c = interp_wrapped(*this, s_query, [&](Eigen::Index i) { return std::cos(psi[i]); });
  const double s_ = interp_wrapped(*this, s_query, [&](Eigen::Index i) { return std::sin(psi[i]); });
  return std::atan2(s_, c);
}

void RacingLine::normal_at(double s_query, double* out_nx, double* out_ny) const {
  double a = interp_wrapped(*this, s_query, [&](Eigen::Index i) { return nx[i]; });
  double b = interp_wrapped(*this, s_query, [&](Eigen::Index i) { return ny[i]; });
  const double norm = std::hypot(a, b);
  *out_nx = a / norm;
  *out_ny = b / norm;
}

void RacingLine::margins_at(double s_query, double* left, double* right) const {
  *left = interp_wrapped(*this, s_query, [&](Eigen::Index i) { return d_left[i]; });
  *right = interp_wrapped(*this, s_query, [&](Eigen::Index i) { return d_right[i]; });
}

RacelineResult min_curvature_raceline(const TrackDefinition& track, double w_veh,
                                      const RacelineConfig& config) {
  TrackDefinition working = track;
  if (config.widths_are_full) working.w *= 0.5;
  ResampledTrack center = resample_track(working, config.spacing);
  const Eigen::Index n = center.x.size();

  Eigen::VectorXd nx, ny;
  left_normals(center.x, center.y, &nx, &ny);

  const double margin = w_veh / 2.0;
  Eigen::VectorXd bound(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    bound[i] = center.w[i] - margin;
    if (bound[i] <= 0.0) {
      throw ValidationError("track too narrow for the vehicle at station " + std::to_string(i));
    }
  }

  RacelineResult result;
  result.centerline_cost = spline_cost(center.x, center.y);

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  for (int it = 0; it < config.max_iterations; ++it) {
    Eigen::VectorXd next = raceline_sweep(center, nx, ny, bound, alpha);
    const double delta = (next - alpha).lpNorm<Eigen::Infinity>();
    alpha = next;
    result.iterations = it + 1;
    if (delta < config.convergence_tol) break;
  }

  finalize_geometry(center, nx, ny, alpha, margin, &result.line);
  result.line_cost = result.line.kappa.squaredNorm();
  return result;
}

double reoptimize_cost(const TrackDefinition& track, double w_veh, const RacelineConfig& config,
                       const RacingLine& line) {
  TrackDefinition working = track;
  if (config.widths_are_full) working.w *= 0.5;
  ResampledTrack center = resample_track(working, config.spacing);
  Eigen::VectorXd nx, ny;
  left_normals(center.x, center.y, &nx, &ny);
  const double margin = w_veh / 2.0;
  Eigen::VectorXd bound = center.w.array() - margin;
  Eigen::VectorXd alpha = raceline_sweep(center, nx, ny, bound, line.offsets);
  RacingLine updated;
  finalize_geometry(center, nx, ny, alpha, margin, &updated);
  return updated.kappa.squaredNorm();
}

void attach_reference_profile(RacingLine* line, const VelocityProfileSet& profiles,
                              double mu_ref) {
  const ProfileLookup lookup = profile_for_mu(profiles, mu_ref);
  line->v_x = lookup.speeds;
  const Eigen::Index n = line->size();
  line->a_x.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = wrap(i + 1, n);
    const double ds = (j == 0 ? line->total_length : line->s[j]) - line->s[i];
    line->a_x[i] = (lookup.speeds[j] * lookup.speeds[j] - lookup.speeds[i] * lookup.speeds[i]) /
                   (2.0 * std::max(ds, 1e-9));
  }
}

double drivetrain_top_speed(const DrivetrainParams& dtp, double d_max) {
  // C_d v^2 + C_m2 d v + C_roll - C_m1 d = 0
  const double a = dtp.C_d;
  const double b = dtp.C_m2 * d_max;
  const double c = dtp.C_roll - dtp.C_m1 * d_max;
  if (a < 1e-12) return -c / b;
  return (-b + std::sqrt(b * b - 4.0 * a * c)) / (2.0 * a);
}

Eigen::VectorXd velocity_profile(const RacingLine& line, double mu_eff,
                                 const VehicleGeometry& geom, const DrivetrainParams& drivetrain,
                                 const ActuationLimits& limits) {
  if (!(mu_eff > 0)) throw ValidationError("velocity_profile requires mu_eff > 0");
  const Eigen::Index n = line.size();
  const double ay_max = mu_eff * kGravity;
  const double v_top = drivetrain_top_speed(drivetrain, limits.d_max);

  // Per-segment spacing (wrapped).
  Eigen::VectorXd ds(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = wrap(i + 1, n);
    ds[i] = (j == 0 ? line.total_length : line.s[j]) - line.s[i];
  }

  // Cornering cap.
  Eigen::VectorXd v(n);
  Eigen::Index anchor = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double k = std::abs(line.kappa[i]);
    v[i] = k > 1e-9 ? std::min(v_top, std::sqrt(ay_max / k)) : v_top;
    if (v[i] < v[anchor]) anchor = i;
  }

  auto drive_accel = [&](double speed) {
    return std::max(
        0.0, ((drivetrain.C_m1 - drivetrain.C_m2 * speed) * limits.d_max - drivetrain.C_roll -
              drivetrain.C_d * speed * speed) /
                 geom.m);
  };
  auto brake_accel = [&](double speed) {
    return ((drivetrain.C_m1 - drivetrain.C_m2 * speed) * (-limits.d_min) + drivetrain.C_roll +
            drivetrain.C_d * speed * speed) /
           geom.m;
  };
  auto circle_remainder = [&](double speed, double kappa) {
    const double lat = speed * speed * std::abs(kappa);
    const double rem2 = ay_max * ay_max - lat * lat;
    return rem2 > 0 ? std::sqrt(rem2) : 0.0;
  };

  // Forward (acceleration) and backward (braking) passes from the anchor,
  // repeated so the wrap-around becomes consistent.
  for (int sweep = 0; sweep < 3; ++sweep) {
    for (Eigen::Index step = 0; step < n; ++step) {
      const Eigen::Index i = wrap(anchor + step, n);
      const Eigen::Index j = wrap(i + 1, n);
      const double a = std::min(drive_accel(v[i]), circle_remainder(v[i], line.kappa[i]));
      v[j] = std::min(v[j], std::sqrt(v[i] * v[i] + 2.0 * a * ds[i]));
    }
    for (Eigen::Index step = 0; step < n; ++step) {
      const Eigen::Index j = wrap(anchor - step, n);
      const Eigen::Index i = wrap(j - 1, n);
      // Deceleration over segment i -> j is limited at the faster end i, so
      // the entry speed solves v^2 <= v_j^2 + 2 a(v) ds with a shrinking in
      // v. The feasibility gap is monotone in v: bisect for the largest
      // admissible entry speed.
      auto gap = [&](double speed) {
        const double a = std::min(brake_accel(speed), circle_remainder(speed, line.kappa[i]));
        return speed * speed - v[j] * v[j] - 2.0 * a * ds[i];
      };
      if (gap(v[i]) > 0.0) {
        double lo = std::min(v[i], v[j]);
        double hi = v[i];
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo + hi);
          (gap(mid) > 0.0 ? hi : lo) = mid;
        }
        v[i] = lo;
      }
    }
  }
  return v;
}

VelocityProfileSet velocity_profiles_for_grid(const RacingLine& line,
                                              const Eigen::VectorXd& mu_grid,
                                              const VehicleGeometry& geom,
                                              const DrivetrainParams& drivetrain,
                                              const ActuationLimits& limits, ExecutionMode mode) {
  VelocityProfileSet set;
  set.mu_grid = mu_grid;
  set.profiles.resize(mu_grid.size(), line.size());
  if (mode == ExecutionMode::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (Eigen::Index i = 0; i < mu_grid.size(); ++i) {
      set.profiles.row(i) = velocity_profile(line, mu_grid[i], geom, drivetrain, limits);
    }
  } else {
    for (Eigen::Index i = 0; i < mu_grid.size(); ++i) {
      set.profiles.row(i) = velocity_profile(line, mu_grid[i], geom, drivetrain, limits);
    }
  }
  return set;
}

ProfileLookup profile_for_mu(const VelocityProfileSet& set, double mu) {
  const Eigen::Index n_mu = set.mu_grid.size();
  if (n_mu == 0) throw ValidationError("profile_for_mu: empty grid");
  ProfileLookup out;
  if (mu <= set.mu_grid[0]) {
    out.speeds = set.profiles.row(0);
    out.clamped = mu < set.mu_grid[0];
    return out;
  }
  if (mu >= set.mu_grid[n_mu - 1]) {
    out.speeds = set.profiles.row(n_mu - 1);
    out.clamped = mu > set.mu_grid[n_mu - 1];
    return out;
  }
  Eigen::Index i = 0;
  while (i + 1 < n_mu && set.mu_grid[i + 1] < mu) ++i;
  if (set.mu_grid[i + 1] == mu) {
    out.speeds = set.profiles.row(i + 1);
    return out;
  }
  const double f = (mu - set.mu_grid[i]) / (set.mu_grid[i + 1] - set.mu_grid[i]);
  out.speeds = (1.0 - f) * set.profiles.row(i) + f * set.profiles.row(i + 1);
  return out;
}

namespace {
Json vector_to_json(const Eigen::VectorXd& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}
Eigen::VectorXd vector_from_json(const Json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}
}  // namespace

void save_raceline(const RacelineArtifact& artifact, const std::filesystem::path& file) {
  const RacingLine& line = artifact.line;
  Json doc;
  doc["x"] = vector_to_json(line.x);
  doc["y"] = vector_to_json(line.y);
  doc["s"] = vector_to_json(line.s);
  doc["v_x"] = vector_to_json(line.v_x);
  doc["a_x"] = vector_to_json(line.a_x);
  doc["psi"] = vector_to_json(line.psi);
  doc["kappa"] = vector_to_json(line.kappa);
  doc["nx"] = vector_to_json(line.nx);
  doc["ny"] = vector_to_json(line.ny);
  doc["d_left"] = vector_to_json(line.d_left);
  doc["d_right"] = vector_to_json(line.d_right);
  doc["offsets"] = vector_to_json(line.offsets);
  doc["cx"] = vector_to_json(line.cx);
  doc["cy"] = vector_to_json(line.cy);
  doc["cw"] = vector_to_json(line.cw);
  doc["total_length"] = line.total_length;
  doc["mu_grid"] = vector_to_json(artifact.profiles.mu_grid);
  Json profiles = Json::array();
  for (Eigen::Index i = 0; i < artifact.profiles.profiles.rows(); ++i) {
    profiles.push_back(vector_to_json(artifact.profiles.profiles.row(i)));
  }
  doc["profiles"] = profiles;

  std::ofstream out(file);
  if (!out) throw ParseError("cannot write raceline artifact: " + file.string());
  out << doc.dump(1, '\t') << "\n";
}

RacelineArtifact load_raceline(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open raceline artifact: " + file.string());
  Json doc;
  try {
    in >> doc;
  } catch (const Json::exception& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
  RacelineArtifact artifact;
  RacingLine& line = artifact.line;
  line.x = vector_from_json(doc.at("x"));
  line.y = vector_from_json(doc.at("y"));
  line.s = vector_from_json(doc.at("s"));
  if (doc.contains("v_x")) line.v_x = vector_from_json(doc.at("v_x"));
  if (doc.contains("a_x")) line.a_x = vector_from_json(doc.at("a_x"));
  line.psi = vector_from_json(doc.at("psi"));
  line.kappa = vector_from_json(doc.at("kappa"));
  line.nx = vector_from_json(doc.at("nx"));
  line.ny = vector_from_json(doc.at("ny"));
  line.d_left = vector_from_json(doc.at("d_left"));
  line.d_right = vector_from_json(doc.at("d_right"));
  line.offsets = vector_from_json(doc.at("offsets"));
  line.cx = vector_from_json(doc.at("cx"));
  line.cy = vector_from_json(doc.at("cy"));
  line.cw = vector_from_json(doc.at("cw"));
  line.total_length = doc.at("total_length").get<double>();
  artifact.profiles.mu_grid = vector_from_json(doc.at("mu_grid"));
  const auto& profiles = doc.at("profiles");
  artifact.profiles.profiles.resize(profiles.size(), line.x.size());
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    artifact.profiles.profiles.row(static_cast<Eigen::Index>(i)) = vector_from_json(profiles[i]);
  }
  return artifact;
}

}  // namespace elmrace

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
#include <vector>

#include "elmrace/errors.hpp"

namespace elmrace {

/// Closed centerline with per-point half-widths, counter-clockwise order.
struct TrackDefinition {
  Eigen::VectorXd x;  // [m]
  Eigen::VectorXd y;  // [m]
  Eigen::VectorXd w;  // half-width [m]
  bool closed = true;

  Eigen::Index size() const { return x.size(); }
};

/// Parses a `x,y,w` CSV track file and validates it: at least 10 points,
/// consecutive points distinct, every half-width wider than w_veh/2, closed
/// non-self-intersecting centerline.
TrackDefinition load_track(const std::filesystem::path& file, double w_veh);

/// Periodic cubic spline through a closed sequence of points, parameterized
/// by cumulative chord length. Used for resampling and for curvature.
class PeriodicSpline {
 public:
  // Points must describe a closed loop without a duplicated endpoint.
  PeriodicSpline(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

  double total_length() const { return total_; }  // chord-length parameter period

  // Position / derivatives with respect to the chord parameter t (wrapped).
  void evaluate(double t, double* x, double* y) const;
  void derivatives(double t, double* dx, double* dy, double* ddx, double* ddy) const;

  /// Signed curvature (x'y'' - y'x'') / (x'^2 + y'^2)^(3/2) at parameter t.
  double curvature(double t) const;

  /// Curvature evaluated at every node.
  Eigen::VectorXd curvature_at_nodes() const;

  const Eigen::VectorXd& knots() const { return t_; }

 private:
  Eigen::VectorXd t_;                  // knot parameters (size n)
  Eigen::VectorXd x_, y_;              // node positions
  Eigen::VectorXd mx_, my_;            // second derivatives at nodes
  double total_ = 0.0;                 // parameter period
  Eigen::Index segment(double t, double* local) const;
};

/// Curvature at each node of a closed polyline via periodic cubic-spline
/// derivatives. Throws ValidationError for degenerate input (< 4 points or
/// repeated nodes).
Eigen::VectorXd curvature_profile(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Resamples a closed centerline uniformly in arc length. Returns the new
/// points plus any extra channels (e.g. widths) interpolated to the same
/// stations.
struct ResampledTrack {
  Eigen::VectorXd x, y, w;
  double spacing = 0.0;       // realized spacing [m]
  double total_length = 0.0;  // [m]
};
ResampledTrack resample_track(const TrackDefinition& track, double target_spacing);

}  // namespace elmrace

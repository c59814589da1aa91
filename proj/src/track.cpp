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

#include "elmrace/track.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace elmrace {

namespace {

// Proper segment intersection test for the self-intersection check.
bool segments_intersect(double ax, double ay, double bx, double by, double cx, double cy,
                        double dx, double dy) {
  auto cross = [](double ox, double oy, double px, double py, double qx, double qy) {
    return (px - ox) * (qy - oy) - (py - oy) * (qx - ox);
  };
  const double d1 = cross(cx, cy, dx, dy, ax, ay);
  const double d2 = cross(cx, cy, dx, dy, bx, by);
  const double d3 = cross(ax, ay, bx, by, cx, cy);
  const double d4 = cross(ax, ay, bx, by, dx, dy);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

}  // namespace

TrackDefinition load_track(const std::filesystem::path& file, double w_veh) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open track file: " + file.string());

  std::string line;
  if (!std::getline(in, line)) throw ParseError(file.string() + ": empty file");
  // header: x,y,w (whitespace tolerated)
  {
    std::string header = line;
    header.erase(std::remove_if(header.begin(), header.end(),
                                [](unsigned char c) { return std::isspace(c); }),
                 header.end());
    if (header != "x,y,w") {
      throw ParseError(file.string() + ":1: expected header 'x,y,w', got '" + line + "'");
    }
  }

  std::vector<double> xs, ys, ws;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::string cell;
    double vals[3];
    for (int c = 0; c < 3; ++c) {
      if (!std::getline(ss, cell, ',')) {
        throw ParseError(file.string() + ":" + std::to_string(line_no) + ": expected 3 columns");
      }
      try {
        std::size_t pos = 0;
        vals[c] = std::stod(cell, &pos);
      } catch (const std::exception&) {
        throw ParseError(file.string() + ":" + std::to_string(line_no) + ": bad number '" + cell +
                         "'");
      }
    }
    xs.push_back(vals[0]);
    ys.push_back(vals[1]);
    ws.push_back(vals[2]);
  }

  // Drop a duplicated closing point if present.
  if (xs.size() >= 2 && xs.front() == xs.back() && ys.front() == ys.back()) {
    xs.pop_back();
    ys.pop_back();
    ws.pop_back();
  }

  const auto n = static_cast<Eigen::Index>(xs.size());
  if (n < 10) {
    throw ValidationError(file.string() + ": track needs at least 10 points, got " +
                          std::to_string(n));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = (i + 1) % n;
    const double d = std::hypot(xs[j] - xs[i], ys[j] - ys[i]);
    if (d <= 0.0) {
      throw ValidationError(file.string() + ": consecutive duplicate point at row " +
                            std::to_string(i + 2));
    }
    if (!(ws[i] > w_veh / 2.0)) {
      throw ValidationError(file.string() + ": half-width " + std::to_string(ws[i]) + " at row " +
                            std::to_string(i + 2) + " does not clear the vehicle (w_veh/2 = " +
                            std::to_string(w_veh / 2.0) + ")");
    }
  }

  // Self-intersection scan over non-adjacent centerline segments.
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index i2 = (i + 1) % n;
    for (Eigen::Index j = i + 2; j < n; ++j) {
      const Eigen::Index j2 = (j + 1) % n;
      if (j2 == i) continue;
      if (segments_intersect(xs[i], ys[i], xs[i2], ys[i2], xs[j], ys[j], xs[j2], ys[j2])) {
        throw ValidationError(file.string() + ": centerline self-intersects near rows " +
                              std::to_string(i + 2) + " and " + std::to_string(j + 2));
      }
    }
  }

  TrackDefinition track;
  track.x = Eigen::Map<Eigen::VectorXd>(xs.data(), n);
  track.y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  track.w = Eigen::Map<Eigen::VectorXd>(ws.data(), n);
  track.closed = true;
  return track;
}

// ---------------------------------------------------------------------------
// Periodic cubic spline

namespace {

// Solves the cyclic tridiagonal system for natural periodic spline second
// derivatives (Sherman-Morrison on the corner entries).
Eigen::VectorXd periodic_second_derivatives(const Eigen::VectorXd& t, const Eigen::VectorXd& f,
                                            double period) {
  const Eigen::Index n = t.size();
  Eigen::VectorXd h(n);  // h[i] = t[i+1] - t[i], wrapped
  for (Eigen::Index i = 0; i < n; ++i) {
    const double next = (i + 1 < n) ? t[i + 1] : t[0] + period;
    h[i] = next - t[i];
  }
  auto fwrap = [&](Eigen::Index i) { return f[(i % n + n) % n]; };
  auto hwrap = [&](Eigen::Index i) { return h[(i % n + n) % n]; };

  // Row i: (h[i-1]/6) M[i-1] + ((h[i-1]+h[i])/3) M[i] + (h[i]/6) M[i+1] = rhs
  Eigen::VectorXd a(n), b(n), c(n), rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a[i] = hwrap(i - 1) / 6.0;
    b[i] = (hwrap(i - 1) + h[i]) / 3.0;
    c[i] = h[i] / 6.0;
    rhs[i] = (fwrap(i + 1) - f[i]) / h[i] - (f[i] - fwrap(i - 1)) / hwrap(i - 1);
  }

  // Sherman-Morrison: corner entries a[0] (to M[n-1]) and c[n-1] (to M[0]).
  const double alpha = a[0];
  const double beta = c[n - 1];
  const double gamma = -b[0];
  Eigen::VectorXd bmod = b;
  bmod[0] -= gamma;
  bmod[n - 1] -= alpha * beta / gamma;

  // Strip the corner coefficients for the pure tridiagonal solves.
  Eigen::VectorXd a_inner = a, c_inner = c;
  a_inner[0] = 0.0;
  c_inner[n - 1] = 0.0;
  auto solve_inner = [&](const Eigen::VectorXd& r) {
    Eigen::VectorXd cp(n), dp(n);
    cp[0] = c_inner[0] / bmod[0];
    dp[0] = r[0] / bmod[0];
    for (Eigen::Index i = 1; i < n; ++i) {
      const double m = bmod[i] - a_inner[i] * cp[i - 1];
      cp[i] = c_inner[i] / m;
      dp[i] = (r[i] - a_inner[i] * dp[i - 1]) / m;
    }
    Eigen::VectorXd sol(n);
    sol[n - 1] = dp[n - 1];
    for (Eigen::Index i = n - 2; i >= 0; --i) sol[i] = dp[i] - cp[i] * sol[i + 1];
    return sol;
  };

  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  u[0] = gamma;
  u[n - 1] = beta;
  const Eigen::VectorXd y1 = solve_inner(rhs);
  const Eigen::VectorXd y2 = solve_inner(u);
  // v = [1, 0, ..., 0, alpha/gamma]
  const double vy1 = y1[0] + alpha / gamma * y1[n - 1];
  const double vy2 = y2[0] + alpha / gamma * y2[n - 1];
  return y1 - (vy1 / (1.0 + vy2)) * y2;
}

}  // namespace

PeriodicSpline::PeriodicSpline(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const Eigen::Index n = x.size();
  if (n < 4 || y.size() != n) {
    throw ValidationError("periodic spline needs at least 4 points");
  }
  x_ = x;
  y_ = y;
  t_.resize(n);
  t_[0] = 0.0;
  for (Eigen::Index i = 1; i < n; ++i) {
    const double d = std::hypot(x[i] - x[i - 1], y[i] - y[i - 1]);
    if (d <= 0.0) throw ValidationError("periodic spline: repeated node");
    t_[i] = t_[i - 1] + d;
  }
  const double closing = std::hypot(x[0] - x[n - 1], y[0] - y[n - 1]);
  if (closing <= 0.0) throw ValidationError("periodic spline: repeated node at seam");
  total_ = t_[n - 1] + closing;

  mx_ = periodic_second_derivatives(t_, x_, total_);
  my_ = periodic_second_derivatives(t_, y_, total_);
}

Eigen::Index PeriodicSpline::segment(double t, double* local) const {
  const Eigen::Index n = t_.size();
  double tw = std::fmod(t, total_);
  if (tw < 0) tw += total_;
  // binary search for the knot interval
  Eigen::Index lo = 0, hi = n;  // interval [t_[i], t_[i+1]) with wrap at i = n-1
  if (tw >= t_[n - 1]) {
    *local = tw - t_[n - 1];
    return n - 1;
  }
  while (hi - lo > 1) {
    const Eigen::Index mid = (lo + hi) / 2;
    if (t_[mid] <= tw) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  *local = tw - t_[lo];
  return lo;
}

void PeriodicSpline::evaluate(double t, double* x, double* y) const {
  double u;
  const Eigen::Index i = segment(t, &u);
  const Eigen::Index n = t_.size();
  const Eigen::Index j = (i + 1) % n;
  const double h = (i + 1 < n ? t_[i + 1] : total_) - t_[i];
  const double A = (h - u) / h;
  const double B = u / h;
  auto piece = [&](const Eigen::VectorXd& f, const Eigen::VectorXd& m) {
    return A * f[i] + B * f[j] +
           ((A * A * A - A) * m[i] + (B * B * B - B) * m[j]) * (h * h) / 6.0;
  };
  *x = piece(x_, mx_);
  *y = piece(y_, my_);
}

void PeriodicSpline::derivatives(double t, double* dx, double* dy, double* ddx,
                                 double* ddy) const {
  double u;
  const Eigen::Index i = segment(t, &u);
  const Eigen::Index n = t_.size();
  const Eigen::Index j = (i + 1) % n;
  const double h = (i + 1 < n ? t_[i + 1] : total_) - t_[i];
  const double A = (h - u) / h;
  const double B = u / h;
  auto d1 = [&](const Eigen::VectorXd& f, const Eigen::VectorXd& m) {
    return (f[j] - f[i]) / h - (3.0 * A * A - 1.0) / 6.0 * h * m[i] +
           (3.0 * B * B - 1.0) / 6.0 * h * m[j];
  };
  auto d2 = [&](const Eigen::VectorXd& m) { return A * m[i] + B * m[j]; };
  *dx = d1(x_, mx_);
  *dy = d1(y_, my_);
  *ddx = d2(mx_);
  *ddy = d2(my_);
}

double PeriodicSpline::curvature(double t) const {
  double dx, dy, ddx, ddy;
  derivatives(t, &dx, &dy, &ddx, &ddy);
  const double speed2 = dx * dx + dy * dy;
  if (speed2 <= 0.0) throw ValidationError("degenerate spline: zero tangent");
  return (dx * ddy - dy * ddx) / std::pow(speed2, 1.5);
}

Eigen::VectorXd PeriodicSpline::curvature_at_nodes() const {
  Eigen::VectorXd kappa(t_.size());
  for (Eigen::Index i = 0; i < t_.size(); ++i) kappa[i] = curvature(t_[i]);
  return kappa;
}

Eigen::VectorXd curvature_profile(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  PeriodicSpline spline(x, y);
  return spline.curvature_at_nodes();
}

ResampledTrack resample_track(const TrackDefinition& track, double target_spacing) {
  PeriodicSpline spline(track.x, track.y);
  // Arc length along the spline, measured by dense chordal refinement.
  const int refine = 8;
  const Eigen::Index n = track.size();
  std::vector<double> s_dense, t_dense;
  s_dense.reserve(n * refine + 1);
  t_dense.reserve(n * refine + 1);
  double s_acc = 0.0;
  double px, py;
  spline.evaluate(0.0, &px, &py);
  s_dense.push_back(0.0);
  t_dense.push_back(0.0);
  const double period = spline.total_length();
  const Eigen::Index n_dense = n * refine;
  for (Eigen::Index i = 1; i <= n_dense; ++i) {
    const double t = period * static_cast<double>(i) / static_cast<double>(n_dense);
    double qx, qy;
    spline.evaluate(t, &qx, &qy);
    s_acc += std::hypot(qx - px, qy - py);
    s_dense.push_back(s_acc);
    t_dense.push_back(t);
    px = qx;
    py = qy;
  }
  const double total = s_acc;

  const auto n_out = static_cast<Eigen::Index>(std::max<double>(8.0, std::round(total / target_spacing)));
  ResampledTrack out;
  out.x.resize(n_out);
  out.y.resize(n_out);
  out.w.resize(n_out);
  out.total_length = total;
  out.spacing = total / static_cast<double>(n_out);

  // Widths are interpolated linearly in the original arc-length stations.
  Eigen::VectorXd s_nodes(n + 1);
  s_nodes[0] = 0.0;
  for (Eigen::Index i = 1; i <= n; ++i) {
    const Eigen::Index j = i % n;
    const Eigen::Index k = i - 1;
    s_nodes[i] = s_nodes[k] + std::hypot(track.x[j] - track.x[k], track.y[j] - track.y[k]);
  }
  const double chord_total = s_nodes[n];

  std::size_t cursor = 0;
  for (Eigen::Index i = 0; i < n_out; ++i) {
    const double s = total * static_cast<double>(i) / static_cast<double>(n_out);
    while (cursor + 1 < s_dense.size() && s_dense[cursor + 1] < s) ++cursor;
    const double s0 = s_dense[cursor], s1 = s_dense[cursor + 1];
    const double frac = (s1 > s0) ? (s - s0) / (s1 - s0) : 0.0;
    const double t = t_dense[cursor] + frac * (t_dense[cursor + 1] - t_dense[cursor]);
    spline.evaluate(t, &out.x[i], &out.y[i]);

    // width lookup in chord-length coordinates
    const double sc = s / total * chord_total;
    const auto it = std::upper_bound(s_nodes.data(), s_nodes.data() + n + 1, sc);
    Eigen::Index k = std::max<Eigen::Index>(0, it - s_nodes.data() - 1);
    k = std::min(k, n - 1);
    const double seg = s_nodes[k + 1] - s_nodes[k];
    const double f = seg > 0 ? (sc - s_nodes[k]) / seg : 0.0;
    out.w[i] = (1.0 - f) * track.w[k] + f * track.w[(k + 1) % n];
  }
  return out;
}

}  // namespace elmrace

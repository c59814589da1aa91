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

#include "elmrace/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "elmrace/errors.hpp"
#include "elmrace/mpc.hpp"

namespace elmrace {

namespace {

struct Point {
  double x, y;
};

// Minimal fixed-viewport canvas with y flipped (SVG y grows downward).
class Canvas {
 public:
  Canvas(double x_min, double x_max, double y_min, double y_max, double width, double height,
         double margin)
      : x_min_(x_min), y_min_(y_min), width_(width), height_(height), margin_(margin) {
    const double sx = (width - 2 * margin) / std::max(x_max - x_min, 1e-12);
    const double sy = (height - 2 * margin) / std::max(y_max - y_min, 1e-12);
    scale_ = std::min(sx, sy);
    y_max_ = y_max;
  }

  // Non-isotropic variant for time-series panels.
  static Canvas stretched(double x_min, double x_max, double y_min, double y_max, double width,
                          double height, double margin) {
    Canvas c(x_min, x_max, y_min, y_max, width, height, margin);
    c.sx_ = (width - 2 * margin) / std::max(x_max - x_min, 1e-12);
    c.sy_ = (height - 2 * margin) / std::max(y_max - y_min, 1e-12);
    c.stretch_ = true;
    return c;
  }

  Point map(double x, double y) const {
    if (stretch_) {
      return {margin_ + (x - x_min_) * sx_, height_ - margin_ - (y - y_min_) * sy_};
    }
    return {margin_ + (x - x_min_) * scale_, height_ - margin_ - (y - y_min_) * scale_};
  }

  void polyline(std::ostringstream& os, const std::vector<Point>& world, const std::string& color,
                double stroke_width, const std::string& dash = "", bool close = false) const {
    if (world.size() < 2) return;
    os << "<path d=\"";
    for (std::size_t i = 0; i < world.size(); ++i) {
      const Point p = map(world[i].x, world[i].y);
      os << (i == 0 ? 'M' : 'L') << p.x << ' ' << p.y << ' ';
    }
    if (close) os << 'Z';
    os << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << stroke_width << "\"";
    if (!dash.empty()) os << " stroke-dasharray=\"" << dash << "\"";
    os << "/>\n";
  }

  void text(std::ostringstream& os, double x, double y, const std::string& label,
            const std::string& color = "#333") const {
    const Point p = map(x, y);
    os << "<text x=\"" << p.x << "\" y=\"" << p.y << "\" font-size=\"11\" fill=\"" << color
       << "\" font-family=\"sans-serif\">" << label << "</text>\n";
  }

 private:
  double x_min_, y_min_, y_max_;
  double width_, height_, margin_;
  double scale_ = 1.0;
  double sx_ = 1.0, sy_ = 1.0;
  bool stretch_ = false;
};

void write_svg(const std::filesystem::path& file, double width, double height,
               const std::string& body) {
  std::ofstream out(file);
  if (!out) throw ParseError("cannot write SVG: " + file.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << body << "</svg>\n";
}

std::string mu_color(std::size_t i, std::size_t n) {
  const double f = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
  const int r = static_cast<int>(40 + 200 * f);
  const int b = static_cast<int>(220 - 180 * f);
  std::ostringstream os;
  os << "rgb(" << r << ",80," << b << ")";
  return os.str();
}

std::vector<Point> track_edge(const RacingLine& line, double side) {
  std::vector<Point> pts;
  const Eigen::Index n = line.cx.size();
  pts.reserve(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    pts.push_back({line.cx[i] + side * line.cw[i] * line.nx[i],
                   line.cy[i] + side * line.cw[i] * line.ny[i]});
  }
  return pts;
}

void track_bounds(const RacingLine& line, double* x_min, double* x_max, double* y_min,
                  double* y_max) {
  *x_min = line.cx.minCoeff() - line.cw.maxCoeff();
  *x_max = line.cx.maxCoeff() + line.cw.maxCoeff();
  *y_min = line.cy.minCoeff() - line.cw.maxCoeff();
  *y_max = line.cy.maxCoeff() + line.cw.maxCoeff();
}

}  // namespace

void plot_raceline(const RacelineArtifact& artifact, const std::filesystem::path& file) {
  const RacingLine& line = artifact.line;
  double x_min, x_max, y_min, y_max;
  track_bounds(line, &x_min, &x_max, &y_min, &y_max);
  const double w = 860, h_track = 520, h_speed = 240;
  Canvas track(x_min, x_max, y_min, y_max, w, h_track, 30);

  std::ostringstream body;
  track.polyline(body, track_edge(line, +1.0), "#888", 1.5, "", true);
  track.polyline(body, track_edge(line, -1.0), "#888", 1.5, "", true);
  {
    std::vector<Point> center;
    for (Eigen::Index i = 0; i < line.cx.size(); ++i) center.push_back({line.cx[i], line.cy[i]});
    track.polyline(body, center, "#bbb", 1.0, "4,4", true);
    std::vector<Point> race;
    for (Eigen::Index i = 0; i < line.x.size(); ++i) race.push_back({line.x[i], line.y[i]});
    track.polyline(body, race, "#0057d8", 2.0, "", true);
  }
  track.text(body, x_min, y_max, "racing line (blue), centerline (dashed)");

  // Speed panel: v(s) per grid mu.
  const double v_max = artifact.profiles.profiles.maxCoeff();
  Canvas speed =
      Canvas::stretched(0.0, line.total_length, 0.0, v_max * 1.05, w, h_speed, 30);
  std::ostringstream speed_body;
  const auto n_mu = static_cast<std::size_t>(artifact.profiles.mu_grid.size());
  for (std::size_t m = 0; m < n_mu; ++m) {
    std::vector<Point> curve;
    for (Eigen::Index i = 0; i < line.size(); ++i) {
      curve.push_back({line.s[i], artifact.profiles.profiles(static_cast<Eigen::Index>(m), i)});
    }
    speed.polyline(speed_body, curve, mu_color(m, n_mu), 1.2);
  }
  speed.text(speed_body, 0.0, v_max, "speed profiles v(s) per mu (blue=low, red=high)");

  std::ostringstream all;
  all << body.str() << "<g transform=\"translate(0," << h_track << ")\">" << speed_body.str()
      << "</g>\n";
  write_svg(file, w, h_track + h_speed, all.str());
}

void plot_trajectory(const RacelineArtifact& artifact, const RunLog& log,
                     const std::filesystem::path& file) {
  const RacingLine& line = artifact.line;
  double x_min, x_max, y_min, y_max;
  track_bounds(line, &x_min, &x_max, &y_min, &y_max);
  const double w = 860, h = 560;
  Canvas canvas(x_min, x_max, y_min, y_max, w, h, 30);
  std::ostringstream body;
  canvas.polyline(body, track_edge(line, +1.0), "#888", 1.5, "", true);
  canvas.polyline(body, track_edge(line, -1.0), "#888", 1.5, "", true);
  std::vector<Point> race;
  for (Eigen::Index i = 0; i < line.x.size(); ++i) race.push_back({line.x[i], line.y[i]});
  canvas.polyline(body, race, "#9ec7ff", 1.5, "", true);

  // Executed path, violations highlighted.
  std::vector<Point> segment;
  bool violating = false;
  auto flush = [&]() {
    canvas.polyline(body, segment, violating ? "#d62728" : "#1a9641", 2.0);
    segment.clear();
  };
  for (const auto& row : log.rows) {
    if (!segment.empty() && row.violation != violating) {
      segment.push_back({row.state.x, row.state.y});
      flush();
    }
    violating = row.violation;
    segment.push_back({row.state.x, row.state.y});
  }
  flush();
  canvas.text(body, x_min, y_max, "trajectory (green), violations (red)");
  write_svg(file, w, h, body.str());
}

void plot_speeds(const RacelineArtifact& artifact, const RunLog& log,
                 const std::filesystem::path& file) {
  if (log.rows.empty()) return;
  const double w = 860, h = 300;
  double v_max = 0.1;
  for (const auto& row : log.rows) v_max = std::max(v_max, row.state.v_x);
  const double t_end = log.rows.back().t;
  Canvas canvas = Canvas::stretched(0.0, std::max(t_end, 1e-6), 0.0, v_max * 1.1, w, h, 34);
  std::ostringstream body;

  std::vector<Point> actual, reference;
  for (const auto& row : log.rows) {
    actual.push_back({row.t, row.state.v_x});
    const ProfileLookup lookup = profile_for_mu(artifact.profiles, row.mu_pred);
    const double s = project_to_s(artifact.line, row.state.x, row.state.y, row.state.phi);
    // interpolate the reference speed at s
    const RacingLine& line = artifact.line;
    const Eigen::Index n = line.size();
    const auto it = std::upper_bound(line.s.data(), line.s.data() + n, s);
    Eigen::Index i = std::max<Eigen::Index>(0, it - line.s.data() - 1);
    const Eigen::Index j = (i + 1) % n;
    const double seg = (j == 0 ? line.total_length : line.s[j]) - line.s[i];
    const double f = seg > 0 ? (s - line.s[i]) / seg : 0.0;
    reference.push_back({row.t, (1.0 - f) * lookup.speeds[i] + f * lookup.speeds[j]});
  }
  canvas.polyline(body, reference, "#7fbf7b", 1.4, "5,3");
  canvas.polyline(body, actual, "#0057d8", 1.8);
  canvas.text(body, 0.0, v_max * 1.08, "v_x (blue) vs reference speed (dashed) over time [s]");
  write_svg(file, w, h, body.str());
}

void plot_mu(const RunLog& log, const std::filesystem::path& file) {
  if (log.rows.empty()) return;
  const double w = 860, h = 280;
  double mu_max = 0.2;
  for (const auto& row : log.rows) mu_max = std::max({mu_max, row.mu_true, row.mu_pred});
  const double t_end = log.rows.back().t;
  Canvas canvas = Canvas::stretched(0.0, std::max(t_end, 1e-6), 0.0, mu_max * 1.15, w, h, 34);
  std::ostringstream body;
  std::vector<Point> truth, pred;
  for (const auto& row : log.rows) {
    truth.push_back({row.t, row.mu_true});
    pred.push_back({row.t, row.mu_pred});
  }
  canvas.polyline(body, truth, "#333", 1.6);
  canvas.polyline(body, pred, "#e66101", 1.6, "6,3");
  canvas.text(body, 0.0, mu_max * 1.1, "mu true (black) vs predicted (dashed orange) over time [s]");
  write_svg(file, w, h, body.str());
}

void plot_validation(const FitReport& report, const std::filesystem::path& file) {
  const double w = 860, h_panel = 200;
  const char* labels[3] = {"e_vdot_x [m/s^2]", "e_vdot_y [m/s^2]", "e_omega_dot [rad/s^2]"};
  std::ostringstream all;
  const std::size_t n = report.actual.size();
  for (int c = 0; c < 3; ++c) {
    double lo = 0, hi = 0;
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min({lo, report.actual[i][c], report.predicted[i][c]});
      hi = std::max({hi, report.actual[i][c], report.predicted[i][c]});
    }
    Canvas canvas = Canvas::stretched(0.0, static_cast<double>(n), lo, hi + 1e-9, w, h_panel, 26);
    std::ostringstream body;
    std::vector<Point> actual, pred;
    for (std::size_t i = 0; i < n; ++i) {
      actual.push_back({static_cast<double>(i), report.actual[i][c]});
      pred.push_back({static_cast<double>(i), report.predicted[i][c]});
    }
    canvas.polyline(body, actual, "#333", 1.4);
    canvas.polyline(body, pred, "#e66101", 1.4, "5,3");
    canvas.text(body, 0.0, hi, labels[c]);
    all << "<g transform=\"translate(0," << h_panel * c << ")\">" << body.str() << "</g>\n";
  }
  write_svg(file, w, h_panel * 3, all.str());
}

}  // namespace elmrace

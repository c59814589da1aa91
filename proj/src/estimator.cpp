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

#include "elmrace/estimator.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace elmrace {

namespace {
using Json = nlohmann::json;
}

Eigen::VectorXd ResidualParams::pack() const {
  Eigen::VectorXd p(size());
  p[0] = C_roll;
  p[1] = C_d;
  p.segment(2, beta_f.size()) = beta_f;
  p.tail(beta_r.size()) = beta_r;
  return p;
}

ResidualParams ResidualParams::unpack(const Eigen::VectorXd& p, Eigen::Index n_f,
                                      Eigen::Index n_r) {
  if (p.size() != 2 + n_f + n_r) throw ValidationError("ResidualParams::unpack: size mismatch");
  ResidualParams out;
  out.C_roll = p[0];
  out.C_d = p[1];
  out.beta_f = p.segment(2, n_f);
  out.beta_r = p.tail(n_r);
  return out;
}

bool ResidualDataset::push(const ResidualRecord& record) {
  if (!record.e.allFinite() || !record.x.all_finite()) {
    ++rejected_;
    return false;
  }
  records_.push_back(record);
  if (records_.size() > capacity_) records_.pop_front();
  return true;
}

std::vector<const ResidualRecord*> ResidualDataset::recent(std::size_t count) const {
  const std::size_t n = std::min(count, records_.size());
  std::vector<const ResidualRecord*> out;
  out.reserve(n);
  for (std::size_t i = records_.size() - n; i < records_.size(); ++i) {
    out.push_back(&records_[i]);
  }
  return out;
}

Eigen::Vector3d predict_residual_with(const TireCurve& front, const TireCurve& rear, double C_roll,
                                      double C_d, const VehicleState& x, const ControlInput& u,
                                      const SlopeSignals& slope, const VehicleGeometry& geom,
                                      const DrivetrainParams& drivetrain, double dt) {
  const auto [alpha_f, alpha_r] = slip_angles(x, geom);
  const double F_fy = front(alpha_f);
  const double F_ry = rear(alpha_r);
  const double m = geom.m;
  const double L = geom.wheelbase();

  // nominal e-kinematic quantities for the coupling terms
  const double vdot_x_nom = longitudinal_force(drivetrain, u.d, x.v_x, Resistance::ignore) / m;
  const double delta_rate = u.ddelta / dt;
  const double coupling = delta_rate * x.v_x + vdot_x_nom * x.delta;

  Eigen::Vector3d e;
  e[0] = (-C_roll - C_d * x.v_x * x.v_x - F_fy * std::sin(x.delta) + m * x.v_y * x.omega) / m -
         kGravity * std::sin(slope.p);
  e[1] = (F_ry + F_fy * std::cos(x.delta) - m * x.v_x * x.omega) / m -
         (-kGravity * std::sin(slope.r) + geom.l_f / L * coupling);
  e[2] = (F_fy * geom.l_f * std::cos(x.delta) - F_ry * geom.l_r) / geom.I_z - coupling / L;
  return e;
}

Eigen::Vector3d predict_residual(const ResidualParams& params, const Elm& elm_f, const Elm& elm_r,
                                 const VehicleState& x, const ControlInput& u,
                                 const SlopeSignals& slope, const VehicleGeometry& geom,
                                 const DrivetrainParams& drivetrain, double dt) {
  Elm f = elm_f;
  Elm r = elm_r;
  f.set_output_weights(params.beta_f);
  r.set_output_weights(params.beta_r);
  return predict_residual_with([&](double a) { return f.forward(a); },
                               [&](double a) { return r.forward(a); }, params.C_roll, params.C_d,
                               x, u, slope, geom, drivetrain, dt);
}

void residual_jacobian(const Elm& elm_f, const Elm& elm_r, const VehicleState& x,
                       const ControlInput& u, const SlopeSignals& slope,
                       const VehicleGeometry& geom, const DrivetrainParams& drivetrain, double dt,
                       Eigen::Matrix<double, 3, Eigen::Dynamic>* J, Eigen::Vector3d* bias) {
  const auto [alpha_f, alpha_r] = slip_angles(x, geom);
  const Eigen::VectorXd h_f = elm_f.hidden(alpha_f);
  const Eigen::VectorXd h_r = elm_r.hidden(alpha_r);
  const double m = geom.m;
  const double L = geom.wheelbase();
  const Eigen::Index n_f = h_f.size(), n_r = h_r.size();

  J->resize(3, 2 + n_f + n_r);
  J->setZero();
  const double sin_d = std::sin(x.delta);
  const double cos_d = std::cos(x.delta);
  // column 0: C_roll, column 1: C_d
  (*J)(0, 0) = -1.0 / m;
  (*J)(0, 1) = -x.v_x * x.v_x / m;
  J->block(0, 2, 1, n_f) = (-sin_d / m) * h_f.transpose();
  J->block(1, 2, 1, n_f) = (cos_d / m) * h_f.transpose();
  J->block(2, 2, 1, n_f) = (geom.l_f * cos_d / geom.I_z) * h_f.transpose();
  J->block(1, 2 + n_f, 1, n_r) = (1.0 / m) * h_r.transpose();
  J->block(2, 2 + n_f, 1, n_r) = (-geom.l_r / geom.I_z) * h_r.transpose();

  const double vdot_x_nom = longitudinal_force(drivetrain, u.d, x.v_x, Resistance::ignore) / m;
  const double delta_rate = u.ddelta / dt;
  const double coupling = delta_rate * x.v_x + vdot_x_nom * x.delta;
  (*bias)[0] = x.v_y * x.omega - kGravity * std::sin(slope.p);
  (*bias)[1] = -x.v_x * x.omega + kGravity * std::sin(slope.r) - geom.l_f / L * coupling;
  (*bias)[2] = -coupling / L;
}

double residual_loss(const ResidualParams& params, const Elm& elm_f, const Elm& elm_r,
                     const std::vector<const ResidualRecord*>& batch, const VehicleGeometry& geom,
                     const DrivetrainParams& drivetrain, double dt) {
  if (batch.empty()) throw ValidationError("residual_loss: empty batch");
  const Eigen::VectorXd p = params.pack();
  double loss = 0.0;
  Eigen::Matrix<double, 3, Eigen::Dynamic> J;
  Eigen::Vector3d bias;
  for (const ResidualRecord* rec : batch) {
    residual_jacobian(elm_f, elm_r, rec->x, rec->u, rec->slope, geom, drivetrain, dt, &J, &bias);
    const Eigen::Vector3d err = rec->e - (J * p + bias);
    loss += err.squaredNorm();
  }
  return loss;
}

Eigen::VectorXd residual_loss_gradient(const ResidualParams& params, const Elm& elm_f,
                                       const Elm& elm_r,
                                       const std::vector<const ResidualRecord*>& batch,
                                       const VehicleGeometry& geom,
                                       const DrivetrainParams& drivetrain, double dt) {
  if (batch.empty()) throw ValidationError("residual_loss_gradient: empty batch");
  const Eigen::VectorXd p = params.pack();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p.size());
  Eigen::Matrix<double, 3, Eigen::Dynamic> J;
  Eigen::Vector3d bias;
  for (const ResidualRecord* rec : batch) {
    residual_jacobian(elm_f, elm_r, rec->x, rec->u, rec->slope, geom, drivetrain, dt, &J, &bias);
    const Eigen::Vector3d err = rec->e - (J * p + bias);
    grad.noalias() -= 2.0 * J.transpose() * err;
  }
  return grad;
}

bool sgd_momentum_step(ResidualParams* params, MomentumState* momentum,
                       const Eigen::VectorXd& grad) {
  if (!grad.allFinite()) return false;
  Eigen::VectorXd p = params->pack();
  if (momentum->v.size() != p.size()) {
    throw ValidationError("sgd_momentum_step: momentum size mismatch");
  }
  momentum->v = momentum->gamma * momentum->v + (1.0 - momentum->gamma) * grad;
  p -= momentum->alpha * momentum->v;
  *params = ResidualParams::unpack(p, params->beta_f.size(), params->beta_r.size());
  return true;
}

ResidualRecord observe(const VehicleState& x_k, const ControlInput& u_k,
                       const VehicleState& x_next, const SlopeSignals& slope,
                       const VehicleGeometry& geom, const DrivetrainParams& drivetrain, double dt,
                       RkOrder order, SlipRangeTracker* tracker) {
  const VehicleState nominal = ekinematic_step(x_k, u_k, geom, drivetrain, dt, order);
  ResidualRecord rec;
  rec.x = x_k;
  rec.u = u_k;
  rec.slope = slope;
  rec.e[0] = (x_next.v_x - nominal.v_x) / dt;
  rec.e[1] = (x_next.v_y - nominal.v_y) / dt;
  rec.e[2] = (x_next.omega - nominal.omega) / dt;
  if (tracker) {
    const auto [alpha_f, alpha_r] = slip_angles(x_k, geom);
    tracker->update(alpha_f, alpha_r);
  }
  return rec;
}

double scan_abs_max(const std::function<double(double)>& f, double lo, double hi,
                    double resolution, ExecutionMode mode) {
  if (!(hi > lo)) return std::abs(f(lo));
  // Interior samples sit on an absolute grid (multiples of the resolution),
  // so a scan over a superset range sees a superset of samples and the
  // maximum is monotone under range growth.
  const auto k_lo = static_cast<long>(std::ceil(lo / resolution));
  const auto k_hi = static_cast<long>(std::floor(hi / resolution));
  const long interior = std::max<long>(0, k_hi - k_lo + 1);
  const long total = interior + 2;
  double best = 0.0;
  auto sample = [&](long i) {
    if (i == 0) return lo;
    if (i == total - 1) return hi;
    return (k_lo + (i - 1)) * resolution;
  };
  if (mode == ExecutionMode::parallel) {
#pragma omp parallel for reduction(max : best) schedule(static)
    for (long i = 0; i < total; ++i) best = std::max(best, std::abs(f(sample(i))));
  } else {
    for (long i = 0; i < total; ++i) best = std::max(best, std::abs(f(sample(i))));
  }
  return best;
}

MuPrediction predict_mu(const Elm& elm_f, const Elm& elm_r, const SlipRangeTracker& tracker,
                        const VehicleGeometry& geom, double mu_init, ExecutionMode mode,
                        double scan_resolution) {
  if (tracker.degenerate(kSlipRangeFloor)) {
    return {mu_init, false};
  }
  const double peak_f =
      scan_abs_max([&](double a) { return elm_f.forward(a); }, tracker.alpha_f_min,
                   tracker.alpha_f_max, scan_resolution, mode);
  const double peak_r =
      scan_abs_max([&](double a) { return elm_r.forward(a); }, tracker.alpha_r_min,
                   tracker.alpha_r_max, scan_resolution, mode);
  return {(peak_f + peak_r) / (geom.m * kGravity), true};
}

VehicleState corrected_step(const ResidualParams& params, const Elm& elm_f, const Elm& elm_r,
                            const VehicleState& x, const ControlInput& u,
                            const SlopeSignals& slope, const VehicleGeometry& geom,
                            const DrivetrainParams& drivetrain, double dt, RkOrder order) {
  Elm f = elm_f;
  Elm r = elm_r;
  f.set_output_weights(params.beta_f);
  r.set_output_weights(params.beta_r);
  auto deriv = [&](const VehicleState::Vector& v) {
    const VehicleState st = VehicleState::from_vector(v);
    VehicleState d = ekinematic_deriv(st, u, geom, drivetrain, dt);
    const Eigen::Vector3d e = predict_residual_with(
        [&](double a) { return f.forward(a); }, [&](double a) { return r.forward(a); },
        params.C_roll, params.C_d, st, u, slope, geom, drivetrain, dt);
    d.v_x += e[0];
    d.v_y += e[1];
    d.omega += e[2];
    return d.to_vector();
  };
  return VehicleState::from_vector(rk_step(deriv, x.to_vector(), dt, order));
}

OnlineLearner::OnlineLearner(const Config& config, const VehicleGeometry& geom,
                             const DrivetrainParams& drivetrain, double dt)
    : config_(config),
      geom_(geom),
      drivetrain_(drivetrain),
      dt_(dt),
      elm_f_(config.n_hidden, config.seed),
      elm_r_(config.n_hidden, config.seed + 1),
      dataset_(config.dataset_capacity) {
  params_.beta_f = Eigen::VectorXd::Zero(config.n_hidden);
  params_.beta_r = Eigen::VectorXd::Zero(config.n_hidden);
  momentum_ = MomentumState::zero(params_.size(), config.alpha, config.gamma);
  // Characteristic residual accelerations: g on the velocity rows, and the
  // yaw acceleration a saturated axle pair would produce, from geometry.
  const double sigma_v = kGravity;
  const double sigma_w = kGravity * geom.m * geom.wheelbase() / (2.0 * geom.I_z);
  scales_ << sigma_v, sigma_v, sigma_w;
}

void OnlineLearner::observe_transition(const VehicleState& x_k, const ControlInput& u_k,
                                       const VehicleState& x_next, const SlopeSignals& slope,
                                       RkOrder order) {
  dataset_.push(observe(x_k, u_k, x_next, slope, geom_, drivetrain_, dt_, order, &tracker_));
}

double OnlineLearner::batch_loss() const {
  const auto batch = dataset_.recent(config_.batch_size);
  if (batch.empty()) return 0.0;
  return residual_loss(params_, elm_f_, elm_r_, batch, geom_, drivetrain_, dt_);
}

double OnlineLearner::train_step() {
  const auto batch = dataset_.recent(config_.batch_size);
  if (batch.empty()) return 0.0;

  // Single sweep: raw loss plus the batch-mean gradient of the
  // component-scaled objective.
  const Eigen::VectorXd p = params_.pack();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p.size());
  Eigen::Matrix<double, 3, Eigen::Dynamic> J;
  Eigen::Vector3d bias;
  double loss = 0.0;
  for (const ResidualRecord* rec : batch) {
    residual_jacobian(elm_f_, elm_r_, rec->x, rec->u, rec->slope, geom_, drivetrain_, dt_, &J,
                      &bias);
    Eigen::Vector3d err = rec->e - (J * p + bias);
    loss += err.squaredNorm();
    err.array() /= scales_.array().square();
    grad.noalias() -= 2.0 * J.transpose() * err;
  }
  grad /= static_cast<double>(batch.size());

  if (!sgd_momentum_step(&params_, &momentum_, grad)) ++skipped_updates_;
  return loss;
}

double OnlineLearner::predict_mu_value(double mu_init, ExecutionMode mode) const {
  return predict_mu_full(mu_init, mode).mu;
}

MuPrediction OnlineLearner::predict_mu_full(double mu_init, ExecutionMode mode) const {
  Elm f = elm_f_;
  Elm r = elm_r_;
  f.set_output_weights(params_.beta_f);
  r.set_output_weights(params_.beta_r);
  return predict_mu(f, r, tracker_, geom_, mu_init, mode);
}

namespace {
Json eigen_to_json(const Eigen::VectorXd& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}
Eigen::VectorXd eigen_from_json(const Json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}
}  // namespace

void OnlineLearner::save_checkpoint(const std::filesystem::path& file) const {
  Json doc;
  doc["n_hidden"] = config_.n_hidden;
  doc["seed"] = config_.seed;
  doc["alpha"] = momentum_.alpha;
  doc["gamma"] = momentum_.gamma;
  doc["batch_size"] = config_.batch_size;
  doc["C_roll"] = params_.C_roll;
  doc["C_d"] = params_.C_d;
  doc["beta_f"] = eigen_to_json(params_.beta_f);
  doc["beta_r"] = eigen_to_json(params_.beta_r);
  doc["momentum_v"] = eigen_to_json(momentum_.v);
  doc["tracker"] = {{"alpha_f_min", tracker_.alpha_f_min},
                    {"alpha_f_max", tracker_.alpha_f_max},
                    {"alpha_r_min", tracker_.alpha_r_min},
                    {"alpha_r_max", tracker_.alpha_r_max}};
  // Input weights are stored verbatim so a checkpoint is self-contained even
  // if the generator changes.
  Json wf = Json::array(), wr = Json::array();
  for (Eigen::Index i = 0; i < elm_f_.input_weights().rows(); ++i) {
    wf.push_back({elm_f_.input_weights()(i, 0), elm_f_.input_weights()(i, 1)});
    wr.push_back({elm_r_.input_weights()(i, 0), elm_r_.input_weights()(i, 1)});
  }
  doc["w_front"] = wf;
  doc["w_rear"] = wr;
  std::ofstream out(file);
  if (!out) throw ParseError("cannot write checkpoint: " + file.string());
  // full precision for bit-exact resume
  out << doc.dump(1, '\t') << "\n";
}

void OnlineLearner::load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open checkpoint: " + file.string());
  Json doc;
  try {
    in >> doc;
  } catch (const Json::exception& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
  config_.n_hidden = doc.at("n_hidden").get<int>();
  config_.seed = doc.at("seed").get<std::uint64_t>();
  config_.batch_size = doc.at("batch_size").get<std::size_t>();
  elm_f_ = Elm(config_.n_hidden, config_.seed);
  elm_r_ = Elm(config_.n_hidden, config_.seed + 1);
  params_.C_roll = doc.at("C_roll").get<double>();
  params_.C_d = doc.at("C_d").get<double>();
  params_.beta_f = eigen_from_json(doc.at("beta_f"));
  params_.beta_r = eigen_from_json(doc.at("beta_r"));
  momentum_.v = eigen_from_json(doc.at("momentum_v"));
  momentum_.alpha = doc.at("alpha").get<double>();
  momentum_.gamma = doc.at("gamma").get<double>();
  tracker_.alpha_f_min = doc.at("tracker").at("alpha_f_min").get<double>();
  tracker_.alpha_f_max = doc.at("tracker").at("alpha_f_max").get<double>();
  tracker_.alpha_r_min = doc.at("tracker").at("alpha_r_min").get<double>();
  tracker_.alpha_r_max = doc.at("tracker").at("alpha_r_max").get<double>();
}

}  // namespace elmrace

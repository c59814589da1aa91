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

#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "elmrace/estimator.hpp"
#include "test_util.hpp"

using namespace elmrace;
using elmrace::testing::params_143;

namespace {

// Dense-grid analytic fit of an ELM to a Pacejka curve over [-range, range].
Elm oracle_fit(const PacejkaParams& tire, double range, int n_hidden, std::uint64_t seed) {
  Elm elm(n_hidden, seed);
  const int n = 4001;
  std::vector<double> alphas(n), targets(n);
  for (int i = 0; i < n; ++i) {
    alphas[i] = -range + 2.0 * range * i / (n - 1);
    targets[i] = pacejka_lateral(tire, alphas[i]);
  }
  elm.fit_analytic(alphas, targets);
  return elm;
}

ResidualRecord make_record(const VehicleState& x, const ControlInput& u,
                           const Eigen::Vector3d& e) {
  ResidualRecord rec;
  rec.x = x;
  rec.u = u;
  rec.e = e;
  return rec;
}

}  // namespace

TEST_SUITE("elm") {

TEST_CASE("construction: determinism, zero output weights, width") {
  Elm a(40, 7), b(40, 7), c(40, 8);
  CHECK(a.n_hidden() == 40);
  CHECK((a.input_weights() - b.input_weights()).norm() == 0.0);
  CHECK((a.input_weights() - c.input_weights()).norm() != 0.0);
  for (double alpha : {-0.3, 0.0, 0.7}) CHECK(a.forward(alpha) == 0.0);
}

TEST_CASE("forward: one-hot output weight reads a hidden activation") {
  Elm elm(16, 3);
  for (int j : {0, 5, 15}) {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(16);
    beta[j] = 1.0;
    elm.set_output_weights(beta);
    CHECK(elm.forward(0.2) == doctest::Approx(elm.hidden(0.2)[j]).epsilon(1e-15));
  }
}

TEST_CASE("fit: held-out accuracy on a tire curve is far below 1% of D") {
  const auto p = params_143();
  Elm elm(40, 11);
  const int n = 801;
  std::vector<double> alphas(n), targets(n);
  for (int i = 0; i < n; ++i) {
    alphas[i] = -0.5 + 1.0 * i / (n - 1);
    targets[i] = pacejka_lateral(p.pacejka_front, alphas[i]);
  }
  elm.fit_analytic(alphas, targets);
  double sq = 0.0;
  const int m = 1000;
  for (int i = 0; i < m; ++i) {
    const double a = -0.5 + 1.0 * (i + 0.5) / m;  // offset from training grid
    const double err = elm.forward(a) - pacejka_lateral(p.pacejka_front, a);
    sq += err * err;
  }
  CHECK(std::sqrt(sq / m) < 0.01 * p.pacejka_front.D);
}

TEST_CASE("fit_analytic: zero targets give zero weights") {
  Elm elm(24, 5);
  std::vector<double> alphas(50), targets(50, 0.0);
  for (int i = 0; i < 50; ++i) alphas[i] = -0.4 + 0.8 * i / 49;
  elm.fit_analytic(alphas, targets);
  CHECK(elm.output_weights().lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("fit_analytic: matches the normal-equation solve when well-conditioned") {
  Elm elm(6, 21);
  const int n = 2000;
  std::vector<double> alphas(n), targets(n);
  Eigen::MatrixXd H(n, 6);
  Eigen::VectorXd t(n);
  const auto p = params_143();
  for (int i = 0; i < n; ++i) {
    alphas[i] = -0.6 + 1.2 * i / (n - 1);
    targets[i] = pacejka_lateral(p.pacejka_rear, alphas[i]);
    H.row(i) = elm.hidden(alphas[i]).transpose();
    t[i] = targets[i];
  }
  elm.fit_analytic(alphas, targets);
  const Eigen::VectorXd beta_ne = (H.transpose() * H).ldlt().solve(H.transpose() * t);
  const double rel = (elm.output_weights() - beta_ne).norm() / beta_ne.norm();
  CHECK(rel < 1e-8);
}

TEST_CASE("fit_analytic: a single sample is interpolated exactly") {
  Elm elm(32, 9);
  const double alpha = 0.17, target = 0.123;
  elm.fit_analytic(std::vector<double>{alpha}, std::vector<double>{target});
  CHECK(elm.forward(alpha) == doctest::Approx(target).epsilon(1e-12));
}

TEST_CASE("fit_analytic: optimal against random perturbations") {
  const auto p = params_143();
  Elm elm = oracle_fit(p.pacejka_front, 0.5, 20, 31);
  const int n = 200;
  Eigen::MatrixXd H(n, 20);
  Eigen::VectorXd t(n);
  for (int i = 0; i < n; ++i) {
    const double a = -0.5 + 1.0 * i / (n - 1);
    H.row(i) = elm.hidden(a).transpose();
    t[i] = pacejka_lateral(p.pacejka_front, a);
  }
  const double loss_fit = (H * elm.output_weights() - t).squaredNorm();
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(0.0, 1e-3);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd beta = elm.output_weights();
    for (int j = 0; j < beta.size(); ++j) beta[j] += normal(rng);
    CHECK(loss_fit <= (H * beta - t).squaredNorm());
  }
}

TEST_CASE("residual prediction: trivial and isolated-term cases") {
  const auto p = params_143();
  Elm elm_f(40, 1), elm_r(40, 2);
  ResidualParams params;
  params.beta_f = Eigen::VectorXd::Zero(40);
  params.beta_r = Eigen::VectorXd::Zero(40);

  VehicleState straight;
  straight.v_x = 1.5;
  const ControlInput coast{0.0, 0.0};
  Eigen::Vector3d e =
      predict_residual(params, elm_f, elm_r, straight, coast, {}, p.geometry, p.drivetrain, p.dt);
  CHECK(e.lpNorm<Eigen::Infinity>() == 0.0);

  params.C_roll = 0.05;
  e = predict_residual(params, elm_f, elm_r, straight, coast, {}, p.geometry, p.drivetrain, p.dt);
  CHECK(e[0] == doctest::Approx(-0.05 / p.geometry.m).epsilon(1e-12));
  CHECK(e[1] == doctest::Approx(0.0));
  CHECK(e[2] == doctest::Approx(0.0));
}

TEST_CASE("exact decomposition with oracle-fit tire models") {
  const auto p = params_143();
  const Elm elm_f = oracle_fit(p.pacejka_front, 1.7, 128, 41);
  const Elm elm_r = oracle_fit(p.pacejka_rear, 1.7, 128, 42);
  ResidualParams params;
  params.C_roll = p.drivetrain.C_roll;
  params.C_d = p.drivetrain.C_d;
  params.beta_f = elm_f.output_weights();
  params.beta_r = elm_r.output_weights();

  std::mt19937_64 rng(17);
  for (int i = 0; i < 200; ++i) {
    const VehicleState s = elmrace::testing::random_state(rng);
    const ControlInput u = elmrace::testing::random_control(rng);
    const SlopeSignals slope{0.03, -0.05};
    const VehicleState dyn = dynamic_deriv(s, u, p.geometry, p.pacejka_front, p.pacejka_rear,
                                           p.drivetrain, slope, p.dt);
    const VehicleState ekin = ekinematic_deriv(s, u, p.geometry, p.drivetrain, p.dt);
    const Eigen::Vector3d e =
        predict_residual(params, elm_f, elm_r, s, u, slope, p.geometry, p.drivetrain, p.dt);
    CHECK(std::abs(ekin.v_x + e[0] - dyn.v_x) < 1e-6);
    CHECK(std::abs(ekin.v_y + e[1] - dyn.v_y) < 1e-6);
    CHECK(std::abs(ekin.omega + e[2] - dyn.omega) < 1e-6);
  }
}

TEST_CASE("observe: self-consistency, ring semantics, rejected records") {
  const auto p = params_143();
  VehicleState x;
  x.v_x = 1.2;
  x.delta = 0.05;
  const ControlInput u{0.4, 0.01};
  const VehicleState next = ekinematic_step(x, u, p.geometry, p.drivetrain, p.dt, RkOrder::sixth);
  SlipRangeTracker tracker;
  const ResidualRecord rec =
      observe(x, u, next, {}, p.geometry, p.drivetrain, p.dt, RkOrder::sixth, &tracker);
  CHECK(rec.e.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(tracker.alpha_f_max >= tracker.alpha_f_min);

  ResidualDataset ds(3);
  for (int i = 0; i < 5; ++i) {
    ResidualRecord r = rec;
    r.e[0] = i;
    CHECK(ds.push(r));
  }
  CHECK(ds.size() == 3);
  CHECK(ds[0].e[0] == 2.0);  // oldest two evicted

  ResidualRecord bad = rec;
  bad.e[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK(!ds.push(bad));
  CHECK(ds.size() == 3);
  CHECK(ds.rejected() == 1);
}

TEST_CASE("observe: dynamic-plant lap residuals track the derivative gap") {
  const auto p = params_143();
  VehicleState x;
  x.v_x = 1.5;
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> throttle(-0.1, 0.6);
  std::uniform_real_distribution<double> steer(-0.03, 0.03);
  SlipRangeTracker tracker;
  for (int k = 0; k < 400; ++k) {
    const ControlInput u{throttle(rng), steer(rng)};
    VehicleState next = dynamic_step(x, u, p.geometry, p.pacejka_front, p.pacejka_rear,
                                     p.drivetrain, {}, p.dt, RkOrder::sixth, 10);
    next.delta = clamp(next.delta, p.limits.delta_min, p.limits.delta_max);
    const ResidualRecord rec =
        observe(x, u, next, {}, p.geometry, p.drivetrain, p.dt, RkOrder::sixth, &tracker);

    // Quadrature oracle: the integrated residual equals the step-average
    // derivative gap; composite Simpson over quarter-step states resolves
    // the fast tire transients.
    // partial-interval steps keep the true steering rate by scaling the
    // per-step increment with the integration span
    auto dyn_at = [&](double tau) {
      const ControlInput u_tau{u.d, u.ddelta * tau / p.dt};
      const VehicleState xs = tau == 0.0
                                  ? x
                                  : dynamic_step(x, u_tau, p.geometry, p.pacejka_front,
                                                 p.pacejka_rear, p.drivetrain, {}, tau,
                                                 RkOrder::sixth, 5);
      return dynamic_deriv(xs, u, p.geometry, p.pacejka_front, p.pacejka_rear, p.drivetrain, {},
                           p.dt)
          .to_vector();
    };
    auto ekin_at = [&](double tau) {
      const ControlInput u_tau{u.d, u.ddelta * tau / p.dt};
      const VehicleState xs =
          tau == 0.0 ? x
                     : ekinematic_step(x, u_tau, p.geometry, p.drivetrain, tau, RkOrder::sixth);
      return ekinematic_deriv(xs, u, p.geometry, p.drivetrain, p.dt).to_vector();
    };
    VehicleState::Vector avg = VehicleState::Vector::Zero();
    const double w[5] = {1, 4, 2, 4, 1};
    for (int q = 0; q < 5; ++q) {
      avg += w[q] / 12.0 * (dyn_at(q * p.dt / 4) - ekin_at(q * p.dt / 4));
    }
    CHECK(rec.e[0] == doctest::Approx(avg[3]).epsilon(0.02).scale(0.5));
    CHECK(rec.e[1] == doctest::Approx(avg[4]).epsilon(0.02).scale(0.5));
    CHECK(rec.e[2] == doctest::Approx(avg[5]).epsilon(0.02).scale(10.0));
    x = next;
  }
  CHECK(tracker.alpha_f_max > tracker.alpha_f_min);
}

TEST_CASE("loss: zero at perfect prediction, hand-computed sum, FD gradient") {
  const auto p = params_143();
  Elm elm_f(40, 1), elm_r(40, 2);
  ResidualParams params;
  params.beta_f = Eigen::VectorXd::Zero(40);
  params.beta_r = Eigen::VectorXd::Zero(40);

  VehicleState straight;
  straight.v_x = 1.0;
  const ControlInput coast{0.0, 0.0};

  // prediction is exactly zero for this state; target (1,2,3) gives 14
  std::vector<ResidualRecord> recs;
  recs.push_back(make_record(straight, coast, {1.0, 2.0, 3.0}));
  std::vector<const ResidualRecord*> batch{&recs[0]};
  CHECK(residual_loss(params, elm_f, elm_r, batch, p.geometry, p.drivetrain, p.dt) ==
        doctest::Approx(14.0).epsilon(1e-15));

  recs.clear();
  std::mt19937_64 rng(5);
  for (int i = 0; i < 40; ++i) {
    ResidualRecord rec;
    rec.x = elmrace::testing::random_state(rng);
    rec.u = elmrace::testing::random_control(rng);
    rec.e = Eigen::Vector3d::Random();
    recs.push_back(rec);
  }
  batch.clear();
  for (const auto& r : recs) batch.push_back(&r);

  std::normal_distribution<double> normal(0.0, 0.05);
  for (int point = 0; point < 20; ++point) {
    ResidualParams at;
    at.C_roll = normal(rng);
    at.C_d = normal(rng);
    at.beta_f = Eigen::VectorXd::NullaryExpr(40, [&](Eigen::Index) { return normal(rng); });
    at.beta_r = Eigen::VectorXd::NullaryExpr(40, [&](Eigen::Index) { return normal(rng); });
    const Eigen::VectorXd grad =
        residual_loss_gradient(at, elm_f, elm_r, batch, p.geometry, p.drivetrain, p.dt);

    Eigen::VectorXd packed = at.pack();
    const double h = 1e-6;
    for (int j : {0, 1, 2, 17, 41, 42, 60, 81}) {
      Eigen::VectorXd plus = packed, minus = packed;
      plus[j] += h;
      minus[j] -= h;
      const ResidualParams pp = ResidualParams::unpack(plus, 40, 40);
      const ResidualParams pm = ResidualParams::unpack(minus, 40, 40);
      const double fd = (residual_loss(pp, elm_f, elm_r, batch, p.geometry, p.drivetrain, p.dt) -
                         residual_loss(pm, elm_f, elm_r, batch, p.geometry, p.drivetrain, p.dt)) /
                        (2.0 * h);
      const double denom = std::max(std::abs(fd), 1e-6);
      CHECK(std::abs(grad[j] - fd) / denom < 1e-4);
    }
  }

  CHECK_THROWS_AS(
      residual_loss(params, elm_f, elm_r, {}, p.geometry, p.drivetrain, p.dt), ValidationError);
}

TEST_CASE("sgd with momentum: plain step, velocity decay, toy convergence") {
  ResidualParams params;
  params.beta_f = Eigen::VectorXd::Zero(2);
  params.beta_r = Eigen::VectorXd::Zero(2);
  MomentumState momentum = MomentumState::zero(params.size(), 0.1, 0.0);

  Eigen::VectorXd grad = Eigen::VectorXd::Ones(6);
  CHECK(sgd_momentum_step(&params, &momentum, grad));
  CHECK(params.C_roll == doctest::Approx(-0.1).epsilon(1e-15));  // p -= alpha * grad

  // gamma = 0.9, zero gradients: velocity decays geometrically
  momentum = MomentumState::zero(params.size(), 0.1, 0.9);
  momentum.v = Eigen::VectorXd::Ones(6);
  const Eigen::VectorXd before = params.pack();
  sgd_momentum_step(&params, &momentum, Eigen::VectorXd::Zero(6));
  CHECK(momentum.v[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK((params.pack() - before + 0.1 * momentum.v).lpNorm<Eigen::Infinity>() < 1e-15);

  // non-finite gradient is skipped
  Eigen::VectorXd bad = Eigen::VectorXd::Ones(6);
  bad[3] = std::numeric_limits<double>::infinity();
  const Eigen::VectorXd saved = params.pack();
  CHECK(!sgd_momentum_step(&params, &momentum, bad));
  CHECK((params.pack() - saved).lpNorm<Eigen::Infinity>() == 0.0);

  // paper rates on a quadratic toy loss: L = 25 |p - p*|^2
  ResidualParams toy;
  toy.beta_f = Eigen::VectorXd::Zero(2);
  toy.beta_r = Eigen::VectorXd::Zero(2);
  MomentumState mom = MomentumState::zero(toy.size(), 0.002, 0.9);
  Eigen::VectorXd target(6);
  target << 1.0, -2.0, 0.5, 0.25, -0.75, 1.5;
  for (int it = 0; it < 20000; ++it) {
    const Eigen::VectorXd g = 50.0 * (toy.pack() - target);
    sgd_momentum_step(&toy, &mom, g);
  }
  CHECK((toy.pack() - target).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("mu prediction: flags, oracle peaks, restricted ranges, monotonicity") {
  const auto p = params_143();
  Elm zero_f(40, 1), zero_r(40, 2);
  SlipRangeTracker degenerate;
  degenerate.update(0.001, 0.001);
  const MuPrediction fallback = predict_mu(zero_f, zero_r, degenerate, p.geometry, 0.8);
  CHECK(!fallback.confident);
  CHECK(fallback.mu == doctest::Approx(0.8));

  SlipRangeTracker wide;
  wide.update(-1.6, -1.6);
  wide.update(1.6, 1.6);
  const MuPrediction zero = predict_mu(zero_f, zero_r, wide, p.geometry, 0.8);
  CHECK(zero.confident);
  CHECK(zero.mu == doctest::Approx(0.0));

  const Elm elm_f = oracle_fit(p.pacejka_front, 1.7, 128, 51);
  const Elm elm_r = oracle_fit(p.pacejka_rear, 1.7, 128, 52);
  const double mu_full = (p.pacejka_front.D + p.pacejka_rear.D) / (p.geometry.m * kGravity);
  const MuPrediction full = predict_mu(elm_f, elm_r, wide, p.geometry, 0.8);
  CHECK(full.confident);
  CHECK(full.mu == doctest::Approx(mu_full).epsilon(1e-3));

  SlipRangeTracker narrow;
  narrow.update(-0.15, -0.15);
  narrow.update(0.15, 0.15);
  const MuPrediction small = predict_mu(elm_f, elm_r, narrow, p.geometry, 0.8);
  CHECK(small.mu < mu_full);

  // enlarging the range never decreases the estimate
  double prev = 0.0;
  SlipRangeTracker grow;
  for (double r = 0.05; r <= 1.65; r += 0.05) {
    grow.update(-r, -r);
    grow.update(r, r);
    const MuPrediction mu = predict_mu(elm_f, elm_r, grow, p.geometry, 0.8);
    CHECK(mu.mu >= prev - 1e-12);
    prev = mu.mu;
  }
}

TEST_CASE("corrected step: e-kinematic collapse, oracle one-step accuracy") {
  const auto p = params_143();
  Elm elm_f(40, 1), elm_r(40, 2);
  ResidualParams zero;
  zero.beta_f = Eigen::VectorXd::Zero(40);
  zero.beta_r = Eigen::VectorXd::Zero(40);

  // straight driving: all residual terms vanish with zero parameters
  VehicleState straight;
  straight.v_x = 1.4;
  const ControlInput coast{0.3, 0.0};
  const VehicleState corr =
      corrected_step(zero, elm_f, elm_r, straight, coast, {}, p.geometry, p.drivetrain, p.dt);
  const VehicleState ekin = ekinematic_step(straight, coast, p.geometry, p.drivetrain, p.dt);
  CHECK((corr.to_vector() - ekin.to_vector()).lpNorm<Eigen::Infinity>() == 0.0);

  const Elm of = oracle_fit(p.pacejka_front, 1.7, 128, 61);
  const Elm orr = oracle_fit(p.pacejka_rear, 1.7, 128, 62);
  ResidualParams oracle;
  oracle.C_roll = p.drivetrain.C_roll;
  oracle.C_d = p.drivetrain.C_d;
  oracle.beta_f = of.output_weights();
  oracle.beta_r = orr.output_weights();
  std::mt19937_64 rng(71);
  for (int i = 0; i < 100; ++i) {
    const VehicleState s = elmrace::testing::random_state(rng);
    const ControlInput u = elmrace::testing::random_control(rng);
    const VehicleState truth = dynamic_step(s, u, p.geometry, p.pacejka_front, p.pacejka_rear,
                                            p.drivetrain, {}, p.dt, RkOrder::sixth, 1);
    const VehicleState pred =
        corrected_step(oracle, of, orr, s, u, {}, p.geometry, p.drivetrain, p.dt);
    CHECK((pred.to_vector() - truth.to_vector()).lpNorm<Eigen::Infinity>() < 1e-5);
  }
}

TEST_CASE("learner: deterministic trajectories and bit-exact checkpoints") {
  const auto p = params_143();
  OnlineLearner::Config config;
  config.seed = 77;
  auto run = [&](OnlineLearner& learner) {
    VehicleState x;
    x.v_x = 1.0;
    std::mt19937_64 rng(3);
    for (int k = 0; k < 120; ++k) {
      const ControlInput u{0.3 + 0.2 * std::sin(0.1 * k), 0.01 * std::cos(0.2 * k)};
      VehicleState next = dynamic_step(x, u, p.geometry, p.pacejka_front, p.pacejka_rear,
                                       p.drivetrain, {}, p.dt, RkOrder::sixth, 10);
      next.delta = clamp(next.delta, p.limits.delta_min, p.limits.delta_max);
      learner.observe_transition(x, u, next, {}, RkOrder::sixth);
      learner.train_step();
      x = next;
    }
  };
  OnlineLearner a(config, p.geometry, p.drivetrain, p.dt);
  OnlineLearner b(config, p.geometry, p.drivetrain, p.dt);
  run(a);
  run(b);
  CHECK((a.params().pack() - b.params().pack()).lpNorm<Eigen::Infinity>() == 0.0);

  const auto tmp = std::filesystem::temp_directory_path() / "elmrace_checkpoint.json";
  a.save_checkpoint(tmp);
  OnlineLearner c(OnlineLearner::Config{}, p.geometry, p.drivetrain, p.dt);
  c.load_checkpoint(tmp);
  CHECK((c.params().pack() - a.params().pack()).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((c.momentum().v - a.momentum().v).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(c.tracker().alpha_f_min == a.tracker().alpha_f_min);
  CHECK(c.tracker().alpha_r_max == a.tracker().alpha_r_max);
  CHECK((c.elm_front().input_weights() - a.elm_front().input_weights()).norm() == 0.0);
  std::filesystem::remove(tmp);
}

}  // TEST_SUITE

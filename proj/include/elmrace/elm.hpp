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
#include <cstdint>
#include <span>

namespace elmrace {

/// Single-hidden-layer network with a fixed random input layer and a
/// trainable linear output layer, modeling one tire's slip-to-force curve.
/// Inputs are [alpha, 1]; the kernel is tanh.
class Elm {
 public:
  /// Input weights are drawn once, uniform on [-5, 5], from the given seed;
  /// output weights start at zero.
  Elm(int n_hidden, std::uint64_t seed);

  double forward(double alpha) const { return hidden(alpha).dot(beta_); }

  /// Hidden activations tanh(w0 * alpha + w1).
  Eigen::VectorXd hidden(double alpha) const {
    return (w_.col(0) * alpha + w_.col(1)).array().tanh();
  }

  /// Least-squares output weights via the pseudo-inverse of the hidden
  /// matrix (minimum-norm solution under rank deficiency).
  void fit_analytic(std::span<const double> alphas, std::span<const double> targets);

  int n_hidden() const { return static_cast<int>(w_.rows()); }
  std::uint64_t seed() const { return seed_; }
  const Eigen::MatrixXd& input_weights() const { return w_; }
  const Eigen::VectorXd& output_weights() const { return beta_; }
  void set_output_weights(const Eigen::VectorXd& beta);

 private:
  Eigen::MatrixXd w_;     // n_hidden x 2, fixed after construction
  Eigen::VectorXd beta_;  // n_hidden
  std::uint64_t seed_ = 0;
};

}  // namespace elmrace

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

#include "elmrace/elm.hpp"

#include <Eigen/SVD>
#include <random>

#include "elmrace/errors.hpp"

namespace elmrace {

Elm::Elm(int n_hidden, std::uint64_t seed) : seed_(seed) {
  if (n_hidden < 1) throw ValidationError("Elm requires at least one hidden unit");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-5.0, 5.0);
  w_.resize(n_hidden, 2);
  for (int i = 0; i < n_hidden; ++i) {
    w_(i, 0) = uniform(rng);
    w_(i, 1) = uniform(rng);
  }
  beta_ = Eigen::VectorXd::Zero(n_hidden);
}

void Elm::set_output_weights(const Eigen::VectorXd& beta) {
  if (beta.size() != beta_.size()) throw ValidationError("Elm output weight size mismatch");
  beta_ = beta;
}

void Elm::fit_analytic(std::span<const double> alphas, std::span<const double> targets) {
  if (alphas.empty() || alphas.size() != targets.size()) {
    throw ValidationError("Elm::fit_analytic needs matching non-empty samples");
  }
  const auto n = static_cast<Eigen::Index>(alphas.size());
  Eigen::MatrixXd H(n, n_hidden());
  for (Eigen::Index i = 0; i < n; ++i) H.row(i) = hidden(alphas[i]).transpose();
  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) t[i] = targets[i];
  Eigen::BDCSVD<Eigen::MatrixXd> svd(H, Eigen::ComputeThinU | Eigen::ComputeThinV);
  beta_ = svd.solve(t);
}

}  // namespace elmrace

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
#include <iosfwd>
#include <limits>
#include <optional>

namespace elmrace::qp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// minimize 1/2 z'Pz + q'z  subject to  A z <= b,  lb <= z <= ub.
/// P is symmetrized internally; empty A/lb/ub mean "no such constraints".
struct Problem {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;

  Eigen::Index num_vars() const { return q.size(); }
  Eigen::Index num_ineq() const { return b.size(); }
};

enum class Status { solved, max_iterations, infeasible };

struct Solution {
  Eigen::VectorXd z;
  Eigen::VectorXd lambda;       // duals of the A z <= b rows, >= 0 at optimum
  Eigen::VectorXd bound_duals;  // duals of the box rows (signed)
  Status status = Status::max_iterations;
  int iterations = 0;
  double primal_residual = kInf;
  double dual_residual = kInf;
};

struct Settings {
  double rho = 0.1;            // dual step size (adapted online)
  double sigma = 1e-6;         // proximal regularization
  double alpha = 1.6;          // over-relaxation
  double eps_abs = 1e-6;
  double eps_rel = 1e-5;
  double reg = 1e-8;           // diagonal regularization added to P
  int max_iterations = 4000;
  int check_interval = 25;
  bool adaptive_rho = true;
  bool polish = true;
};

/// Dense operator-splitting solver with warm starting. One instance owns its
/// workspace; use one instance per thread.
class Solver {
 public:
  explicit Solver(Settings settings = {}) : settings_(settings) {}

  Solution solve(const Problem& problem,
                 const std::optional<Eigen::VectorXd>& warm_z = std::nullopt,
                 const std::optional<Eigen::VectorXd>& warm_y = std::nullopt);

  const Settings& settings() const { return settings_; }
  Settings& settings() { return settings_; }

  // Stacked dual (A rows then box rows) of the last solve, for warm starts.
  const Eigen::VectorXd& last_stacked_dual() const { return last_y_; }

 private:
  Settings settings_;
  Eigen::VectorXd last_y_;
  double last_rho_ = 0.0;  // adapted step size carried across solves
  int polish_budget_ = 0;  // early-polish attempts per solve
};

/// Textbook active-set solve for small strictly convex instances: starts
/// unconstrained, adds the most violated row, drops rows with negative
/// multipliers. Use for validation; cost grows quickly with size.
Solution solve_active_set(const Problem& problem, int max_changes = 200);

/// Projected-Newton solve for box-only problems (A must be empty): exact
/// Newton steps on the free set with a projection-arc backtracking line
/// search. Converges to machine-precision KKT once the active set settles.
Solution solve_box_newton(const Problem& problem, double tol = 1e-10, int max_iterations = 100);

/// Writes the problem in a matrix-market-style text block for offline
/// debugging.
void dump_problem(const Problem& problem, std::ostream& os);

}  // namespace elmrace::qp

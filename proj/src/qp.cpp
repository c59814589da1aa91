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

#include "elmrace/qp.hpp"

#include <cstdio>
#include <cstdlib>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include "elmrace/errors.hpp"

namespace elmrace::qp {

namespace {

struct Stacked {
  // Internal form: C z in [l, u], C = [A; I].
  Eigen::MatrixXd C;
  Eigen::VectorXd l, u;
  Eigen::Index m_ineq = 0;
};

Stacked stack_constraints(const Problem& p) {
  const Eigen::Index n = p.num_vars();
  const Eigen::Index m = p.num_ineq();
  Stacked s;
  s.m_ineq = m;
  s.C.resize(m + n, n);
  if (m > 0) s.C.topRows(m) = p.A;
  s.C.bottomRows(n) = Eigen::MatrixXd::Identity(n, n);
  s.l.resize(m + n);
  s.u.resize(m + n);
  s.l.head(m).setConstant(-kInf);
  if (m > 0) s.u.head(m) = p.b;
  if (p.lb.size() == n) {
    s.l.tail(n) = p.lb;
  } else {
    s.l.tail(n).setConstant(-kInf);
  }
  if (p.ub.size() == n) {
    s.u.tail(n) = p.ub;
  } else {
    s.u.tail(n).setConstant(kInf);
  }
  return s;
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

// Modified Ruiz equilibration on the KKT block, plus cost scaling.
struct Scaling {
  Eigen::VectorXd D;  // variable scaling
  Eigen::VectorXd E;  // constraint-row scaling
  double c = 1.0;     // cost scaling
};

Scaling ruiz_equilibrate(Eigen::MatrixXd& P, Eigen::VectorXd& q, Eigen::MatrixXd& C,
                         Eigen::VectorXd& l, Eigen::VectorXd& u, int iterations) {
  const Eigen::Index n = P.rows();
  const Eigen::Index m = C.rows();
  Scaling s;
  s.D = Eigen::VectorXd::Ones(n);
  s.E = Eigen::VectorXd::Ones(m);
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd d(n), e(m);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double np = P.col(j).lpNorm<Eigen::Infinity>();
      const double nc = m ? C.col(j).lpNorm<Eigen::Infinity>() : 0.0;
      const double nrm = std::max(np, nc);
      d[j] = nrm > 1e-12 ? 1.0 / std::sqrt(nrm) : 1.0;
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      const double nrm = C.row(i).lpNorm<Eigen::Infinity>();
      e[i] = nrm > 1e-12 ? 1.0 / std::sqrt(nrm) : 1.0;
    }
    P = d.asDiagonal() * P * d.asDiagonal();
    q = d.asDiagonal() * q;
    if (m) {
      C = e.asDiagonal() * C * d.asDiagonal();
      for (Eigen::Index i = 0; i < m; ++i) {
        if (std::isfinite(l[i])) l[i] *= e[i];
        if (std::isfinite(u[i])) u[i] *= e[i];
      }
    }
    s.D.array() *= d.array();
    s.E.array() *= e.array();

    // cost scaling toward unit-size objective
    double mean_col = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) mean_col += P.col(j).lpNorm<Eigen::Infinity>();
    mean_col /= static_cast<double>(n);
    const double gamma = 1.0 / std::max(1.0, std::max(mean_col, inf_norm(q)));
    P *= gamma;
    q *= gamma;
    s.c *= gamma;
  }
  return s;
}

struct Residuals {
  double primal = kInf;
  double dual = kInf;
  double eps_primal = 0.0;
  double eps_dual = 0.0;
};

Residuals compute_residuals(const Problem& p, const Stacked& st, const Eigen::VectorXd& z,
                            const Eigen::VectorXd& y, double eps_abs, double eps_rel) {
  Residuals r;
  const Eigen::VectorXd Cz = st.C * z;
  const Eigen::VectorXd projected = Cz.cwiseMax(st.l).cwiseMin(st.u);
  r.primal = inf_norm(Cz - projected);
  const Eigen::VectorXd Pz = p.P.selfadjointView<Eigen::Lower>() * z;
  const Eigen::VectorXd Cty = st.C.transpose() * y;
  r.dual = inf_norm(Pz + p.q + Cty);
  r.eps_primal = eps_abs + eps_rel * std::max(inf_norm(Cz), inf_norm(projected));
  r.eps_dual =
      eps_abs + eps_rel * std::max({inf_norm(Pz), inf_norm(p.q), inf_norm(Cty)});
  return r;
}

// Equality-constrained polish on the active rows; returns true if accepted.
// Equality-constrained solve on a guessed active set, followed by a bounded
// loop that drops rows whose multipliers come out with the wrong sign. The
// guess comes from primal proximity scaled by how converged the iterate is.
bool polish_solution(const Problem& p, const Stacked& st, Eigen::VectorXd& z, Eigen::VectorXd& y,
                     double reg, int max_drops) {
  const Eigen::Index n = p.num_vars();
  const Eigen::Index m = st.C.rows();
  const Eigen::VectorXd Cz = st.C * z;
  const Residuals current = compute_residuals(p, st, z, y, 0.0, 0.0);
  const double prox = std::max(1e-8, 10.0 * current.primal);
  const double dual_tol = std::max(1e-8, 0.1 * current.dual);

  struct ActiveRow {
    Eigen::Index row;
    double target;
    int side;  // -1 lower, +1 upper
  };
  std::vector<ActiveRow> act;
  for (Eigen::Index i = 0; i < m; ++i) {
    const bool near_lower = std::isfinite(st.l[i]) && Cz[i] - st.l[i] < prox;
    const bool near_upper = std::isfinite(st.u[i]) && st.u[i] - Cz[i] < prox;
    if (near_lower && (y[i] < dual_tol || !near_upper)) {
      act.push_back({i, st.l[i], -1});
    } else if (near_upper && (y[i] > -dual_tol || !near_lower)) {
      act.push_back({i, st.u[i], +1});
    } else if (!near_lower && !near_upper && std::abs(y[i]) > dual_tol) {
      // strong dual on a non-proximal row: trust the dual sign
      if (y[i] < 0 && std::isfinite(st.l[i])) act.push_back({i, st.l[i], -1});
      if (y[i] > 0 && std::isfinite(st.u[i])) act.push_back({i, st.u[i], +1});
    }
  }

  Eigen::VectorXd z_new, y_new;
  for (int attempt = 0; attempt <= max_drops; ++attempt) {
    const auto k = static_cast<Eigen::Index>(act.size());
    Eigen::MatrixXd K(n + k, n + k);
    K.setZero();
    K.topLeftCorner(n, n) = p.P.selfadjointView<Eigen::Lower>();
    K.topLeftCorner(n, n).diagonal().array() += reg;
    for (Eigen::Index r = 0; r < k; ++r) {
      K.block(n + r, 0, 1, n) = st.C.row(act[r].row);
      K.block(0, n + r, n, 1) = st.C.row(act[r].row).transpose();
      K(n + r, n + r) = -reg;
    }
    Eigen::VectorXd rhs(n + k);
    rhs.head(n) = -p.q;
    for (Eigen::Index r = 0; r < k; ++r) rhs[n + r] = act[r].target;

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
    Eigen::VectorXd sol = lu.solve(rhs);
    for (int it = 0; it < 3; ++it) {
      sol += lu.solve(rhs - K * sol);
    }

    z_new = sol.head(n);
    y_new = Eigen::VectorXd::Zero(m);
    for (Eigen::Index r = 0; r < k; ++r) y_new[act[r].row] = sol[n + r];

    // Drop the most wrong-signed multiplier, if any.
    Eigen::Index worst = -1;
    double worst_val = 1e-9;
    for (Eigen::Index r = 0; r < k; ++r) {
      const double wrong = act[r].side > 0 ? -y_new[act[r].row] : y_new[act[r].row];
      if (wrong > worst_val) {
        worst_val = wrong;
        worst = r;
      }
    }
    if (worst < 0) break;
    act.erase(act.begin() + worst);
    if (attempt == max_drops) return false;
  }

  const Residuals after = compute_residuals(p, st, z_new, y_new, 0.0, 0.0);
  if (std::max(after.primal, after.dual) <= std::max(current.primal, current.dual)) {
    z = z_new;
    y = y_new;
    return true;
  }
  return false;
}

}  // namespace

Solution Solver::solve(const Problem& problem, const std::optional<Eigen::VectorXd>& warm_z,
                       const std::optional<Eigen::VectorXd>& warm_y) {
  const Eigen::Index n = problem.num_vars();
  if (problem.P.rows() != n || problem.P.cols() != n) {
    throw ValidationError("qp: P must be n x n");
  }
  if (problem.num_ineq() > 0 && problem.A.cols() != n) {
    throw ValidationError("qp: A column count must match variables");
  }

  Stacked st = stack_constraints(problem);
  const Eigen::Index m = st.C.rows();

  // Scaled working copies.
  Eigen::MatrixXd P = 0.5 * (problem.P + problem.P.transpose());
  P.diagonal().array() += settings_.reg;
  Eigen::VectorXd q = problem.q;
  Eigen::MatrixXd C = st.C;
  Eigen::VectorXd l = st.l, u = st.u;
  Scaling sc = ruiz_equilibrate(P, q, C, l, u, 10);

  double rho = last_rho_ > 0 ? last_rho_ : settings_.rho;
  auto factorize = [&](double rho_val) {
    Eigen::MatrixXd K = P;
    K.diagonal().array() += settings_.sigma;
    K.noalias() += rho_val * C.transpose() * C;
    return Eigen::LDLT<Eigen::MatrixXd>(K);
  };
  Eigen::LDLT<Eigen::MatrixXd> kkt = factorize(rho);

  // Scaled iterates.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  if (warm_z && warm_z->size() == n) x = sc.D.cwiseInverse().asDiagonal() * (*warm_z);
  if (warm_y && warm_y->size() == m) y = sc.c * sc.E.cwiseInverse().asDiagonal() * (*warm_y);
  Eigen::VectorXd zc = (C * x).cwiseMax(l).cwiseMin(u);

  Solution out;
  out.z = Eigen::VectorXd::Zero(n);
  out.lambda = Eigen::VectorXd::Zero(st.m_ineq);
  out.bound_duals = Eigen::VectorXd::Zero(n);
  polish_budget_ = 4;

  Eigen::VectorXd x_prev = x, y_prev = y;
  const double alpha = settings_.alpha;

  int iter = 0;
  for (; iter < settings_.max_iterations; ++iter) {
    x_prev = x;
    y_prev = y;

    Eigen::VectorXd rhs = settings_.sigma * x - q + C.transpose() * (rho * zc - y);
    Eigen::VectorXd xt = kkt.solve(rhs);
    Eigen::VectorXd zt = C * xt;
    x = alpha * xt + (1.0 - alpha) * x;
    Eigen::VectorXd z_arg = alpha * zt + (1.0 - alpha) * zc + y / rho;
    Eigen::VectorXd zc_next = z_arg.cwiseMax(l).cwiseMin(u);
    y += rho * (alpha * zt + (1.0 - alpha) * zc - zc_next);
    zc = zc_next;

    if ((iter + 1) % settings_.check_interval != 0) continue;

    // Unscale and evaluate true residuals.
    Eigen::VectorXd z_un = sc.D.asDiagonal() * x;
    Eigen::VectorXd y_un = sc.E.asDiagonal() * y / sc.c;
    Residuals res =
        compute_residuals(problem, st, z_un, y_un, settings_.eps_abs, settings_.eps_rel);

    // The active set often settles long before the duals converge: attempt an
    // early polish a few times and exit if it lands within tolerance.
    if (settings_.polish && res.primal < 1e2 * res.eps_primal && polish_budget_ > 0 &&
        (iter + 1) % (8 * settings_.check_interval) == 0) {
      --polish_budget_;
      Eigen::VectorXd z_try = z_un, y_try = y_un;
      if (polish_solution(problem, st, z_try, y_try, settings_.reg, 6)) {
        const Residuals polished =
            compute_residuals(problem, st, z_try, y_try, settings_.eps_abs, settings_.eps_rel);
        if (polished.primal <= polished.eps_primal && polished.dual <= polished.eps_dual) {
          out.status = Status::solved;
          out.iterations = iter + 1;
          out.z = z_try;
          out.primal_residual = polished.primal;
          out.dual_residual = polished.dual;
          out.lambda = y_try.head(st.m_ineq).cwiseMax(0.0);
          out.bound_duals = y_try.tail(n);
          last_y_ = y_try;
          last_rho_ = rho;
          return out;
        }
      }
    }

    if (res.primal <= res.eps_primal && res.dual <= res.eps_dual) {
      out.status = Status::solved;
      out.iterations = iter + 1;
      out.z = z_un;
      if (settings_.polish) polish_solution(problem, st, out.z, y_un, settings_.reg, 10);
      Residuals fin = compute_residuals(problem, st, out.z, y_un, 0.0, 0.0);
      out.primal_residual = fin.primal;
      out.dual_residual = fin.dual;
      out.lambda = y_un.head(st.m_ineq).cwiseMax(0.0);
      out.bound_duals = y_un.tail(n);
      last_y_ = y_un;
      last_rho_ = rho;
      return out;
    }

    // Primal infeasibility certificate.
    Eigen::VectorXd dy = sc.E.asDiagonal() * (y - y_prev) / sc.c;
    const double dy_norm = inf_norm(dy);
    if (dy_norm > 1e-12) {
      const double cert = inf_norm(st.C.transpose() * dy) / dy_norm;
      double support = 0.0;
      bool valid = true;
      for (Eigen::Index i = 0; i < m; ++i) {
        const double yi = dy[i];
        if (yi > 0) {
          if (!std::isfinite(st.u[i])) {
            valid = valid && yi <= 1e-10 * dy_norm;
          } else {
            support += st.u[i] * yi;
          }
        } else if (yi < 0) {
          if (!std::isfinite(st.l[i])) {
            valid = valid && -yi <= 1e-10 * dy_norm;
          } else {
            support += st.l[i] * yi;
          }
        }
      }
      if (valid && cert <= 1e-8 && support < -1e-10 * dy_norm) {
        out.status = Status::infeasible;
        out.iterations = iter + 1;
        out.z = sc.D.asDiagonal() * x;
        out.primal_residual = cert;  // certificate residual
        out.dual_residual = kInf;
        last_y_ = sc.E.asDiagonal() * y / sc.c;
        return out;
      }
    }

    // rho adaptation (OSQP-style ratio rule on scaled residuals).
    if (settings_.adaptive_rho) {
      Eigen::VectorXd Cx = C * x;
      const double rp = inf_norm(Cx - zc) /
                        std::max({inf_norm(Cx), inf_norm(zc), 1e-10});
      Eigen::VectorXd Px = P.selfadjointView<Eigen::Lower>() * x;
      Eigen::VectorXd Cty = C.transpose() * y;
      const double rd = inf_norm(Px + q + Cty) /
                        std::max({inf_norm(Px), inf_norm(q), inf_norm(Cty), 1e-10});
      const double ratio = std::sqrt(rp / std::max(rd, 1e-16));
      if (ratio > 5.0 || ratio < 0.2) {
        rho = std::clamp(rho * ratio, 1e-6, 1e6);
        kkt = factorize(rho);
      }
    }
  }

  // Max iterations: attempt a polish anyway; the active set is often
  // already correct even when the splitting iteration converges slowly.
  out.iterations = iter;
  out.z = sc.D.asDiagonal() * x;
  Eigen::VectorXd y_un = sc.E.asDiagonal() * y / sc.c;
  if (settings_.polish) {
    polish_solution(problem, st, out.z, y_un, settings_.reg, 10);
  }
  Residuals res =
      compute_residuals(problem, st, out.z, y_un, settings_.eps_abs, settings_.eps_rel);
  out.status = (res.primal <= res.eps_primal && res.dual <= res.eps_dual)
                   ? Status::solved
                   : Status::max_iterations;
  out.primal_residual = res.primal;
  out.dual_residual = res.dual;
  out.lambda = y_un.head(st.m_ineq).cwiseMax(0.0);
  out.bound_duals = y_un.tail(n);
  last_y_ = y_un;
  last_rho_ = rho;
  return out;
}

Solution solve_active_set(const Problem& problem, int max_changes) {
  const Eigen::Index n = problem.num_vars();
  Eigen::MatrixXd P = 0.5 * (problem.P + problem.P.transpose());
  P.diagonal().array() += 1e-12;

  // All one-sided rows: A z <= b, z <= ub, -z <= -lb.
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  for (Eigen::Index i = 0; i < problem.num_ineq(); ++i) {
    rows.push_back(problem.A.row(i).transpose());
    rhs.push_back(problem.b[i]);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (problem.ub.size() == n && std::isfinite(problem.ub[j])) {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
      r[j] = 1.0;
      rows.push_back(r);
      rhs.push_back(problem.ub[j]);
    }
    if (problem.lb.size() == n && std::isfinite(problem.lb[j])) {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
      r[j] = -1.0;
      rows.push_back(r);
      rhs.push_back(-problem.lb[j]);
    }
  }
  const auto m = static_cast<Eigen::Index>(rows.size());

  std::vector<Eigen::Index> working;
  Eigen::VectorXd z, mult;
  auto solve_eq = [&]() {
    const auto k = static_cast<Eigen::Index>(working.size());
    Eigen::MatrixXd K(n + k, n + k);
    K.setZero();
    K.topLeftCorner(n, n) = P;
    for (Eigen::Index r = 0; r < k; ++r) {
      K.block(n + r, 0, 1, n) = rows[working[r]].transpose();
      K.block(0, n + r, n, 1) = rows[working[r]];
    }
    Eigen::VectorXd b(n + k);
    b.head(n) = -problem.q;
    for (Eigen::Index r = 0; r < k; ++r) b[n + r] = rhs[working[r]];
    Eigen::VectorXd sol = K.fullPivLu().solve(b);
    z = sol.head(n);
    mult = sol.tail(k);
  };

  solve_eq();
  for (int change = 0; change < max_changes; ++change) {
    // Drop the most negative multiplier if any.
    Eigen::Index drop = -1;
    double most_neg = -1e-9;
    for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(working.size()); ++r) {
      if (mult[r] < most_neg) {
        most_neg = mult[r];
        drop = r;
      }
    }
    if (drop >= 0) {
      working.erase(working.begin() + drop);
      solve_eq();
      continue;
    }
    // Add the most violated constraint.
    Eigen::Index add = -1;
    double worst = 1e-9;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (std::find(working.begin(), working.end(), i) != working.end()) continue;
      const double v = rows[i].dot(z) - rhs[i];
      if (v > worst) {
        worst = v;
        add = i;
      }
    }
    if (add < 0) break;  // primal feasible, duals nonnegative: done
    working.push_back(add);
    solve_eq();
  }

  Solution out;
  out.z = z;
  out.status = Status::solved;
  out.lambda = Eigen::VectorXd::Zero(problem.num_ineq());
  out.bound_duals = Eigen::VectorXd::Zero(n);
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(working.size()); ++r) {
    const Eigen::Index i = working[r];
    if (i < problem.num_ineq()) {
      out.lambda[i] = mult[r];
    }
  }
  Stacked st = stack_constraints(problem);
  Eigen::VectorXd yfull = Eigen::VectorXd::Zero(st.C.rows());
  yfull.head(problem.num_ineq()) = out.lambda;
  Residuals res = compute_residuals(problem, st, out.z, yfull, 0.0, 0.0);
  out.primal_residual = res.primal;
  out.dual_residual = res.dual;  // only meaningful when no active bounds
  return out;
}

Solution solve_box_newton(const Problem& problem, double tol, int max_iterations) {
  if (problem.num_ineq() > 0) {
    throw ValidationError("solve_box_newton handles box constraints only");
  }
  const Eigen::Index n = problem.num_vars();
  const Eigen::MatrixXd P = 0.5 * (problem.P + problem.P.transpose());
  const Eigen::VectorXd lb =
      problem.lb.size() == n ? problem.lb : Eigen::VectorXd::Constant(n, -kInf);
  const Eigen::VectorXd ub =
      problem.ub.size() == n ? problem.ub : Eigen::VectorXd::Constant(n, kInf);
  auto project = [&](Eigen::VectorXd z) { return z.cwiseMax(lb).cwiseMin(ub); };

  Eigen::VectorXd z = project(Eigen::VectorXd::Zero(n));
  const double scale = std::max(1.0, problem.q.lpNorm<Eigen::Infinity>());
  Solution out;
  out.lambda.resize(0);

  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    const Eigen::VectorXd g = P * z + problem.q;
    std::vector<Eigen::Index> free;
    free.reserve(n);
    const double edge = 1e-12;
    double kkt = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const bool at_lo = z[j] <= lb[j] + edge && g[j] > 0;
      const bool at_hi = z[j] >= ub[j] - edge && g[j] < 0;
      if (!at_lo && !at_hi) {
        free.push_back(j);
        kkt = std::max(kkt, std::abs(g[j]));
      }
    }
    if (kkt <= tol * scale) break;

    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd Pff(nf, nf);
    Eigen::VectorXd gf(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      gf[a] = g[free[a]];
      for (Eigen::Index b = 0; b < nf; ++b) Pff(a, b) = P(free[a], free[b]);
    }
    Pff.diagonal().array() += 1e-12 * scale;
    const Eigen::VectorXd dz = Pff.ldlt().solve(-gf);

    // Exact quadratic decrease along the projected step: g'd + d'Pd/2.
    // Evaluating the difference directly avoids the cancellation that would
    // stall a value-based line search near the optimum.
    double step = 1.0;
    Eigen::VectorXd z_new = z;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      z_new = z;
      for (Eigen::Index a = 0; a < nf; ++a) z_new[free[a]] += step * dz[a];
      z_new = project(z_new);
      const Eigen::VectorXd d = z_new - z;
      const double decrease = g.dot(d) + 0.5 * d.dot(P * d);
      if (decrease <= 0.0) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || (z_new - z).lpNorm<Eigen::Infinity>() == 0.0) break;
    z = z_new;
  }

  out.z = z;
  out.iterations = iter;
  const Eigen::VectorXd g = P * z + problem.q;
  out.bound_duals = Eigen::VectorXd::Zero(n);
  double kkt = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const bool at_lo = z[j] <= lb[j] + 1e-12;
    const bool at_hi = z[j] >= ub[j] - 1e-12;
    if ((at_lo && g[j] > 0) || (at_hi && g[j] < 0)) {
      out.bound_duals[j] = -g[j];
    } else {
      kkt = std::max(kkt, std::abs(g[j]));
    }
  }
  out.primal_residual = 0.0;
  out.dual_residual = kkt;
  // The descent loop stalls at floating-point resolution of the objective;
  // anything at 1e-6 of the gradient scale is a solved box QP.
  out.status = kkt <= std::max(1e2 * tol, 1e-6) * scale ? Status::solved : Status::max_iterations;
  return out;
}

void dump_problem(const Problem& p, std::ostream& os) {
  auto write_matrix = [&os](const char* name, const Eigen::MatrixXd& M) {
    os << "%%MatrixMarket matrix array real general\n% " << name << "\n"
       << M.rows() << " " << M.cols() << "\n";
    for (Eigen::Index j = 0; j < M.cols(); ++j)
      for (Eigen::Index i = 0; i < M.rows(); ++i) os << M(i, j) << "\n";
  };
  write_matrix("P", p.P);
  write_matrix("q", p.q);
  write_matrix("A", p.A);
  write_matrix("b", p.b);
  write_matrix("lb", p.lb);
  write_matrix("ub", p.ub);
}

}  // namespace elmrace::qp

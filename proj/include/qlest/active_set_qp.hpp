/*
* Licensed under the Apache License, Version 2.0 (the "License");
* you may not use this file except in compliance with the License.
* You may obtain a copy of the License at
*
*     http://www.apache.org/licenses/LICENSE-2.0
*
* Unless required by applicable law or agreed to in writing, software
* distributed under the License is distributed on an "AS IS" BASIS,
* WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
* See the License for the specific language governing permissions and
* limitations under the License.
*/
#pragma once

#include "qlest/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace qlest::qp {

/// Dense convex QP with equality constraints and simple bounds:
///
///   minimize   1/2 x'Hx + g'x
///   subject to A x = b,  lb <= x <= ub
///
/// H must be symmetric positive definite on the null space of the equality
/// constraints restricted to any face of the box.
struct BoxEqualityQp {
    Eigen::MatrixXd hessian;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd eq_matrix;
    Eigen::VectorXd eq_rhs;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(hessian * x) + gradient.dot(x); }
};

struct SolverOptions {
    int max_iterations = 500;
    /// Steps with infinity norm below this are treated as zero.
    double step_tolerance = 1e-12;
    /// Steps whose predicted objective decrease is below this are treated as zero.
    double decrease_tolerance = 1e-20;
    /// Bound multipliers above -tolerance are accepted as nonnegative.
    double multiplier_tolerance = 1e-12;
};

enum class BoundState : unsigned char { Free, AtLower, AtUpper };

struct Solution {
    Eigen::VectorXd x;
    Eigen::VectorXd eq_multipliers;
    /// Multiplier of the active bound of each variable (0 when free). Sign
    /// convention: lower-bound multipliers >= 0, upper-bound multipliers <= 0.
    Eigen::VectorXd bound_multipliers;
    std::vector<BoundState> working_set;
    int iterations = 0;
    double objective = 0.0;
    double kkt_residual = 0.0;
};

namespace detail {

struct EqpStep {
    Eigen::VectorXd step;
    Eigen::VectorXd eq_multipliers;
};

// Solves the equality-constrained subproblem on the free variables:
//   [H_FF  A_F'] [p_F   ]   [-r_F]
//   [A_F   0   ] [lambda] = [ 0  ]
// Rows of A with no free variable are dropped (their multiplier is set to 0).
inline EqpStep solve_working_set(const BoxEqualityQp& qp, const Eigen::VectorXd& residual,
                                 const std::vector<BoundState>& ws)
{
    const auto n = static_cast<Eigen::Index>(ws.size());
    const auto m = qp.eq_matrix.rows();

    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i)
        if (ws[static_cast<std::size_t>(i)] == BoundState::Free)
            free.push_back(i);

    std::vector<Eigen::Index> rows;
    for (Eigen::Index r = 0; r < m; ++r) {
        bool touches = false;
        for (auto i : free)
            touches = touches || qp.eq_matrix(r, i) != 0.0;
        if (touches)
            rows.push_back(r);
    }

    const auto nf = static_cast<Eigen::Index>(free.size());
    const auto nr = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nf + nr, nf + nr);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf + nr);
    for (Eigen::Index a = 0; a < nf; ++a) {
        for (Eigen::Index b = 0; b < nf; ++b)
            kkt(a, b) = qp.hessian(free[a], free[b]);
        for (Eigen::Index r = 0; r < nr; ++r) {
            kkt(a, nf + r) = qp.eq_matrix(rows[r], free[a]);
            kkt(nf + r, a) = qp.eq_matrix(rows[r], free[a]);
        }
        rhs(a) = -residual(free[a]);
    }

    EqpStep out{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(m)};
    if (nf + nr == 0)
        return out;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible())
        throw Error(ErrorCode::SolverFailure, "singular KKT system in active-set iteration");
    Eigen::VectorXd sol = lu.solve(rhs);
    for (Eigen::Index a = 0; a < nf; ++a)
        out.step(free[a]) = sol(a);
    for (Eigen::Index r = 0; r < nr; ++r)
        out.eq_multipliers(rows[r]) = sol(nf + r);
    return out;
}

} // namespace detail

/// Stationarity, feasibility and sign-condition residual of a candidate
/// primal-dual point, in the infinity norm.
inline double kkt_residual(const BoxEqualityQp& qp, const Eigen::VectorXd& x, const Eigen::VectorXd& eq_multipliers,
                           const Eigen::VectorXd& bound_multipliers)
{
    Eigen::VectorXd stationarity =
        qp.hessian * x + qp.gradient + qp.eq_matrix.transpose() * eq_multipliers - bound_multipliers;
    double res = stationarity.lpNorm<Eigen::Infinity>();
    if (qp.eq_matrix.rows() > 0)
        res = std::max(res, (qp.eq_matrix * x - qp.eq_rhs).lpNorm<Eigen::Infinity>());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        res = std::max(res, qp.lower(i) - x(i));
        res = std::max(res, x(i) - qp.upper(i));
        const double z = bound_multipliers(i);
        const double gap_lo = x(i) - qp.lower(i);
        const double gap_hi = qp.upper(i) - x(i);
        // complementarity: a nonzero multiplier needs its bound to be active
        if (z > 0.0)
            res = std::max(res, z * gap_lo);
        else if (z < 0.0)
            res = std::max(res, -z * gap_hi);
    }
    return res;
}

/// Primal active-set method started from a feasible point `x0`.
///
/// The working set only ever holds bound constraints; equality constraints are
/// always active. A blocking bound never empties an equality row, because an
/// equality row with a single free variable pins that variable (its step
/// component is zero) and so it can not block.
inline Solution solve(const BoxEqualityQp& qp, Eigen::VectorXd x0, const SolverOptions& opt = {})
{
    const auto n = x0.size();
    if (qp.hessian.rows() != n || qp.hessian.cols() != n || qp.gradient.size() != n || qp.lower.size() != n ||
        qp.upper.size() != n || qp.eq_matrix.cols() != n || qp.eq_matrix.rows() != qp.eq_rhs.size())
        throw Error(ErrorCode::InvalidArgument, "inconsistent QP dimensions");

    Solution sol;
    sol.x = std::move(x0);
    sol.working_set.assign(static_cast<std::size_t>(n), BoundState::Free);

    for (sol.iterations = 1; sol.iterations <= opt.max_iterations; ++sol.iterations) {
        const Eigen::VectorXd residual = qp.hessian * sol.x + qp.gradient;
        auto eqp = detail::solve_working_set(qp, residual, sol.working_set);
        const Eigen::VectorXd& p = eqp.step;

        const double predicted_decrease = -(residual.dot(p) + 0.5 * p.dot(qp.hessian * p));
        if (p.lpNorm<Eigen::Infinity>() <= opt.step_tolerance || predicted_decrease <= opt.decrease_tolerance) {
            // Stationary on the working set: check bound multipliers.
            Eigen::VectorXd z = residual + qp.eq_matrix.transpose() * eqp.eq_multipliers;
            Eigen::Index worst = -1;
            double worst_violation = opt.multiplier_tolerance;
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto s = sol.working_set[static_cast<std::size_t>(i)];
                double violation = 0.0;
                if (s == BoundState::AtLower)
                    violation = -z(i);
                else if (s == BoundState::AtUpper)
                    violation = z(i);
                if (violation > worst_violation) {
                    worst_violation = violation;
                    worst = i;
                }
            }
            if (worst < 0) {
                sol.eq_multipliers = eqp.eq_multipliers;
                sol.bound_multipliers = Eigen::VectorXd::Zero(n);
                for (Eigen::Index i = 0; i < n; ++i)
                    if (sol.working_set[static_cast<std::size_t>(i)] != BoundState::Free)
                        sol.bound_multipliers(i) = z(i);
                sol.objective = qp.objective(sol.x);
                sol.kkt_residual = kkt_residual(qp, sol.x, sol.eq_multipliers, sol.bound_multipliers);
                return sol;
            }
            sol.working_set[static_cast<std::size_t>(worst)] = BoundState::Free;
            continue;
        }

        double alpha = 1.0;
        Eigen::Index blocking = -1;
        BoundState blocking_state = BoundState::Free;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (sol.working_set[static_cast<std::size_t>(i)] != BoundState::Free || std::abs(p(i)) <= opt.step_tolerance)
                continue;
            if (p(i) < 0.0) {
                const double t = (qp.lower(i) - sol.x(i)) / p(i);
                if (t < alpha) {
                    alpha = std::max(t, 0.0);
                    blocking = i;
                    blocking_state = BoundState::AtLower;
                }
            }
            else {
                const double t = (qp.upper(i) - sol.x(i)) / p(i);
                if (t < alpha) {
                    alpha = std::max(t, 0.0);
                    blocking = i;
                    blocking_state = BoundState::AtUpper;
                }
            }
        }
        sol.x += alpha * p;
        sol.x = sol.x.cwiseMax(qp.lower).cwiseMin(qp.upper);
        if (blocking >= 0) {
            sol.working_set[static_cast<std::size_t>(blocking)] = blocking_state;
            sol.x(blocking) = blocking_state == BoundState::AtLower ? qp.lower(blocking) : qp.upper(blocking);
        }
    }
    throw Error(ErrorCode::SolverFailure, "active-set iteration limit reached");
}

} // namespace qlest::qp

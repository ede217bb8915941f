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

#include "qlest/active_set_qp.hpp"
#include "qlest/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace qlest {

/// Incoming lanes of one approach and the outgoing roads they can reach.
struct JunctionTopology {
    std::size_t n_lanes = 3;
    std::size_t n_roads = 3;
    /// (lane, road) pairs that are not connected, 0-based.
    std::vector<std::pair<std::size_t, std::size_t>> forbidden;
    /// Nominal origin lane of each road, used by the destination-only probe
    /// count estimator. Empty means road j -> lane min(j, n_lanes - 1).
    std::vector<std::size_t> nominal_lane;

    bool permitted(std::size_t lane, std::size_t road) const
    {
        return std::find(forbidden.begin(), forbidden.end(), std::pair{lane, road}) == forbidden.end();
    }

    std::size_t nominal_lane_of(std::size_t road) const
    {
        if (!nominal_lane.empty())
            return nominal_lane.at(road);
        return std::min(road, n_lanes - 1);
    }

    void validate() const
    {
        if (n_lanes == 0 || n_roads == 0)
            throw Error(ErrorCode::InvalidArgument, "topology needs at least one lane and one road");
        for (auto [lane, road] : forbidden)
            if (lane >= n_lanes || road >= n_roads)
                throw Error(ErrorCode::InvalidArgument, "forbidden pair (" + std::to_string(lane + 1) + "," +
                                                            std::to_string(road + 1) + ") out of range");
        if (!nominal_lane.empty()) {
            if (nominal_lane.size() != n_roads)
                throw Error(ErrorCode::InvalidArgument, "nominal lane list must have one entry per road");
            for (auto l : nominal_lane)
                if (l >= n_lanes)
                    throw Error(ErrorCode::InvalidArgument, "nominal lane out of range");
        }
    }

    /// Three lanes, three roads: left only from lane a, right only from lane c,
    /// straight from any lane.
    static JunctionTopology three_way()
    {
        JunctionTopology t;
        t.forbidden = {{1, 0}, {2, 0}, {0, 2}, {1, 2}};
        t.nominal_lane = {0, 1, 2};
        return t;
    }
};

struct TurnRatios {
    std::vector<double> rho;

    void validate(std::size_t n_roads) const
    {
        if (rho.size() != n_roads)
            throw Error(ErrorCode::InvalidRatios, "expected " + std::to_string(n_roads) + " turn ratios, got " +
                                                      std::to_string(rho.size()));
        double sum = 0.0;
        for (double r : rho) {
            if (!(r >= 0.0 && r <= 1.0))
                throw Error(ErrorCode::InvalidRatios, "turn ratio outside [0,1]");
            sum += r;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw Error(ErrorCode::InvalidRatios, "turn ratios sum to " + std::to_string(sum));
    }
};

/// Lane x road matrix of joint probabilities w_ij, stored row-major.
class AssignmentMatrix {
public:
    AssignmentMatrix() = default;
    AssignmentMatrix(std::size_t n_lanes, std::size_t n_roads)
        : n_lanes_(n_lanes), n_roads_(n_roads), w_(n_lanes * n_roads, 0.0)
    {
    }
    AssignmentMatrix(std::size_t n_lanes, std::size_t n_roads, std::vector<double> row_major)
        : n_lanes_(n_lanes), n_roads_(n_roads), w_(std::move(row_major))
    {
        if (w_.size() != n_lanes_ * n_roads_)
            throw Error(ErrorCode::InvalidArgument, "assignment matrix size mismatch");
    }

    std::size_t n_lanes() const noexcept { return n_lanes_; }
    std::size_t n_roads() const noexcept { return n_roads_; }

    double& operator()(std::size_t lane, std::size_t road) { return w_[lane * n_roads_ + road]; }
    double operator()(std::size_t lane, std::size_t road) const { return w_[lane * n_roads_ + road]; }

    const std::vector<double>& data() const noexcept { return w_; }

    double row_sum(std::size_t lane) const
    {
        double s = 0.0;
        for (std::size_t j = 0; j < n_roads_; ++j)
            s += (*this)(lane, j);
        return s;
    }

    double col_sum(std::size_t road) const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < n_lanes_; ++i)
            s += (*this)(i, road);
        return s;
    }

    /// Rows `lanes` of this matrix, in the given order.
    AssignmentMatrix select_lanes(const std::vector<std::size_t>& lanes) const
    {
        AssignmentMatrix out(lanes.size(), n_roads_);
        for (std::size_t r = 0; r < lanes.size(); ++r)
            for (std::size_t j = 0; j < n_roads_; ++j)
                out(r, j) = (*this)(lanes[r], j);
        return out;
    }

    friend bool operator==(const AssignmentMatrix&, const AssignmentMatrix&) = default;

private:
    std::size_t n_lanes_ = 0;
    std::size_t n_roads_ = 0;
    std::vector<double> w_;
};

/// Squared distance of the lane shares to the balanced split 1/n.
inline double assignment_objective(const AssignmentMatrix& w)
{
    const double target = 1.0 / static_cast<double>(w.n_lanes());
    double f = 0.0;
    for (std::size_t i = 0; i < w.n_lanes(); ++i)
        f += (w.row_sum(i) - target) * (w.row_sum(i) - target);
    return f;
}

struct AssignmentOptions {
    /// Tikhonov weight added to the singular Hessian L'L; makes the optimum unique.
    double regularization = 1e-10;
    qp::SolverOptions solver{};
};

struct AssignmentResult {
    AssignmentMatrix w;
    double objective = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
};

/// Balanced lane assignment: the matrix W closest (in lane shares) to an even
/// split over the lanes, subject to the turn ratios, the topology and 0 <= w <= 1.
///
/// Entries on forbidden pairs and in zero-ratio columns are eliminated up
/// front; the remaining variables go through the active-set QP with Hessian
/// 2(L'L + eps I), where L sums each lane's row.
inline AssignmentResult solve_assignment_detailed(const JunctionTopology& topology, const TurnRatios& ratios,
                                                  const AssignmentOptions& opt = {})
{
    topology.validate();
    ratios.validate(topology.n_roads);

    const std::size_t n = topology.n_lanes;
    const std::size_t d = topology.n_roads;

    // Free variables, column by column.
    struct Var {
        std::size_t lane;
        std::size_t road;
    };
    std::vector<Var> vars;
    std::vector<std::size_t> active_roads;
    for (std::size_t j = 0; j < d; ++j) {
        if (ratios.rho[j] == 0.0)
            continue;
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (topology.permitted(i, j)) {
                vars.push_back({i, j});
                ++count;
            }
        if (count == 0)
            throw Error(ErrorCode::InfeasibleTopology,
                        "road " + std::to_string(j + 1) + " has a positive turn ratio but no permitted lane");
        active_roads.push_back(j);
    }

    const auto nv = static_cast<Eigen::Index>(vars.size());
    const auto nr = static_cast<Eigen::Index>(active_roads.size());
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), nv); // L
    for (Eigen::Index k = 0; k < nv; ++k)
        rows(static_cast<Eigen::Index>(vars[static_cast<std::size_t>(k)].lane), k) = 1.0;
    const Eigen::VectorXd target = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));

    qp::BoxEqualityQp problem;
    problem.hessian = 2.0 * (rows.transpose() * rows) + 2.0 * opt.regularization * Eigen::MatrixXd::Identity(nv, nv);
    problem.gradient = -2.0 * rows.transpose() * target;
    problem.eq_matrix = Eigen::MatrixXd::Zero(nr, nv);
    problem.eq_rhs = Eigen::VectorXd::Zero(nr);
    for (Eigen::Index r = 0; r < nr; ++r) {
        const std::size_t j = active_roads[static_cast<std::size_t>(r)];
        problem.eq_rhs(r) = ratios.rho[j];
        for (Eigen::Index k = 0; k < nv; ++k)
            if (vars[static_cast<std::size_t>(k)].road == j)
                problem.eq_matrix(r, k) = 1.0;
    }
    problem.lower = Eigen::VectorXd::Zero(nv);
    problem.upper = Eigen::VectorXd::Ones(nv);

    // Feasible start: each column split evenly over its permitted lanes.
    Eigen::VectorXd x0(nv);
    for (Eigen::Index r = 0; r < nr; ++r) {
        const double count = problem.eq_matrix.row(r).sum();
        for (Eigen::Index k = 0; k < nv; ++k)
            if (problem.eq_matrix(r, k) != 0.0)
                x0(k) = problem.eq_rhs(r) / count;
    }

    const auto sol = qp::solve(problem, x0, opt.solver);

    AssignmentResult out;
    out.w = AssignmentMatrix(n, d);
    for (Eigen::Index k = 0; k < nv; ++k)
        out.w(vars[static_cast<std::size_t>(k)].lane, vars[static_cast<std::size_t>(k)].road) = sol.x(k);
    out.objective = assignment_objective(out.w);
    out.kkt_residual = sol.kkt_residual;
    out.iterations = sol.iterations;
    return out;
}

inline AssignmentMatrix solve_assignment(const JunctionTopology& topology, const TurnRatios& ratios)
{
    return solve_assignment_detailed(topology, ratios).w;
}

/// Lane shares w_i = sum_j w_ij.
inline std::vector<double> lane_weights(const AssignmentMatrix& w)
{
    std::vector<double> out(w.n_lanes());
    for (std::size_t i = 0; i < w.n_lanes(); ++i)
        out[i] = w.row_sum(i);
    return out;
}

/// Per-lane arrival rates lambda_i = lambda * w_i.
inline std::vector<double> lane_arrival_rates(const AssignmentMatrix& w, double lambda)
{
    if (lambda < 0.0)
        throw Error(ErrorCode::NegativeRate, "arrival rate must be nonnegative");
    auto rates = lane_weights(w);
    for (auto& r : rates)
        r *= lambda;
    return rates;
}

} // namespace qlest

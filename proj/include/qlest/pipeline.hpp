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

#include "qlest/assignment.hpp"
#include "qlest/estimators.hpp"
#include "qlest/queue_dist.hpp"
#include "qlest/simulation.hpp"

#include <algorithm>
#include <array>
#include <cstddef>
#include <vector>

namespace qlest {

/// Queue estimators evaluated per cycle.
enum class QueueEstimator { MBaseline, Prop1, Prop2, Prop3 };

inline constexpr std::array<QueueEstimator, 4> kQueueEstimators{QueueEstimator::MBaseline, QueueEstimator::Prop1,
                                                                QueueEstimator::Prop2, QueueEstimator::Prop3};

/// Penetration ratios at or above this are evaluated as this value in the
/// conditional laws, whose (1-p)^k weights vanish identically at p = 1.
inline constexpr double kMaxModelPenetration = 1.0 - 1e-9;

/// Parameters the per-cycle estimators are evaluated with: either estimated
/// from the probe data or the true ones.
struct EstimationModel {
    double p = 0.0;
    std::vector<double> lane_rates;
    /// Elapsed red time r_i at the evaluation instant (end of red: r_i = R).
    double red_s = 0.0;
    AssignmentMatrix w;
    JunctionTopology topology;
};

struct CycleEstimates {
    std::array<double, 3> m_baseline{};
    std::array<double, 3> prop1{};
    std::array<double, 3> prop2{};
    std::array<double, 3> prop3{};
    ProbeCountEstimate e0;
    ProbeCountEstimate e1;
    /// Prop 2 was replaced by Prop 1 because no probe was queued.
    bool prop2_used_prior = false;
    /// Lanes where m < a_p forced the zero-probe branch.
    std::size_t prop3_inconsistent = 0;

    const std::array<double, 3>& queue(QueueEstimator e) const
    {
        switch (e) {
        case QueueEstimator::MBaseline: return m_baseline;
        case QueueEstimator::Prop1: return prop1;
        case QueueEstimator::Prop2: return prop2;
        case QueueEstimator::Prop3: break;
        }
        return prop3;
    }
};

/// Which estimators to evaluate; Prop 2 dominates the cost.
struct EstimatorSelection {
    bool prop1 = true;
    bool prop2 = true;
    bool prop3 = true;
};

/// Baseline: every lane's queue equals the last-probe position.
inline std::array<double, 3> baseline_m(const CycleObservation& c)
{
    const auto m = static_cast<double>(c.m);
    return {m, m, m};
}

inline StockParams stock_params(const CycleObservation& c, const EstimationModel& model,
                                const ProbeCountEstimate& probe_counts)
{
    StockParams s;
    for (std::size_t i = 0; i < 3; ++i) {
        s.lambdas[i] = model.lane_rates.at(i);
        s.mu[i] = model.lane_rates[i] * model.red_s;
        s.probe_counts[i] = static_cast<std::size_t>(std::max(0L, probe_counts.rounded.at(i)));
    }
    s.p = std::min(model.p, kMaxModelPenetration);
    s.m = c.m;
    s.x_p = c.x_p;
    return s;
}

/// All per-cycle estimates of a 3-lane observation.
inline CycleEstimates estimate_cycle(const CycleObservation& c, const EstimationModel& model,
                                     const EstimatorSelection& sel = {})
{
    if (c.n_lanes() != 3 || model.lane_rates.size() != 3 || model.w.n_lanes() != 3)
        throw Error(ErrorCode::InvalidArgument, "cycle estimator works on three lanes");

    CycleEstimates out;
    const auto dests = queued_probe_destinations(c);
    out.e0 = probe_counts_E0(dests, model.topology);
    out.e1 = probe_counts_E1(dests, model.w);
    out.m_baseline = baseline_m(c);

    auto s = stock_params(c, model, out.e1);
    const std::size_t n_max = truncation_bound(s.mu_max(), s.m, s.x_p);

    std::array<double, 3> prior{};
    if (sel.prop1 || sel.prop2)
        for (std::size_t i = 0; i < 3; ++i)
            prior[i] = prop1_pmf(s.mu[i], n_max).mean();
    if (sel.prop1)
        out.prop1 = prior;

    if (sel.prop2) {
        if (s.m == 0 || s.x_p == 0) {
            out.prop2 = prior;
            out.prop2_used_prior = true;
        }
        else {
            out.prop2 = prop2_expectations(s, n_max);
        }
    }

    if (sel.prop3) {
        for (std::size_t i = 0; i < 3; ++i) {
            try {
                out.prop3[i] = prop3_expectation(prop3_pmf(i, s, n_max));
            }
            catch (const Error& e) {
                if (e.code() != ErrorCode::InconsistentObservation && e.code() != ErrorCode::DegenerateObservation)
                    throw;
                auto zero = s;
                zero.probe_counts[i] = 0;
                out.prop3[i] = prop3_expectation(prop3_pmf(i, zero, n_max));
                ++out.prop3_inconsistent;
            }
        }
    }
    return out;
}

} // namespace qlest

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
#include "qlest/pipeline.hpp"
#include "qlest/simulation.hpp"

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <map>
#include <unordered_set>
#include <vector>

namespace qlest {

/// Three adjacent lanes (first, first + 1, first + 2) of an n-lane road.
struct VirtualWindow {
    std::size_t first = 0;

    std::array<std::size_t, 3> lanes() const { return {first, first + 1, first + 2}; }
    bool contains(std::size_t lane) const { return lane >= first && lane < first + 3; }

    friend auto operator<=>(const VirtualWindow&, const VirtualWindow&) = default;
};

struct NLaneEstimate {
    std::vector<double> per_lane;
    std::vector<std::size_t> contributing_windows;
};

/// The n - 2 overlapping windows (0,1,2), (1,2,3), ..., (n-3, n-2, n-1).
inline std::vector<VirtualWindow> enumerate_windows(std::size_t n)
{
    if (n < 3)
        throw Error(ErrorCode::TooFewLanes, "virtual three-lane roads need n >= 3, got " + std::to_string(n));
    std::vector<VirtualWindow> out;
    for (std::size_t i = 0; i + 3 <= n; ++i)
        out.push_back({i});
    return out;
}

/// Per-lane mean of the estimates of every window containing the lane.
inline NLaneEstimate estimate_nlane(const std::map<VirtualWindow, std::array<double, 3>>& window_estimates,
                                    std::size_t n)
{
    NLaneEstimate out;
    out.per_lane.assign(n, 0.0);
    out.contributing_windows.assign(n, 0);
    for (const auto& w : enumerate_windows(n)) {
        auto it = window_estimates.find(w);
        if (it == window_estimates.end())
            throw Error(ErrorCode::MissingWindow, "no estimate for window starting at lane " + std::to_string(w.first + 1));
        for (std::size_t k = 0; k < 3; ++k) {
            out.per_lane[w.first + k] += it->second[k];
            ++out.contributing_windows[w.first + k];
        }
    }
    for (std::size_t l = 0; l < n; ++l)
        out.per_lane[l] /= static_cast<double>(out.contributing_windows[l]);
    return out;
}

/// The observation as seen on a window alone: its lanes' queues and probes,
/// the last probe among them and their queued-probe exits.
inline CycleObservation restrict_to_window(const CycleObservation& c, const VirtualWindow& w)
{
    if (w.first + 3 > c.n_lanes())
        throw Error(ErrorCode::InvalidArgument, "window exceeds the number of lanes");
    CycleObservation out;
    out.cycle_index = c.cycle_index;
    out.overflow = c.overflow;
    out.carried_over = c.carried_over;
    for (auto l : w.lanes()) {
        out.true_queues.push_back(c.true_queues[l]);
        out.probe_queues.push_back(c.probe_queues[l]);
    }
    std::unordered_set<std::uint64_t> ids;
    double newest = -INFINITY;
    for (const auto& q : c.queued_probes) {
        if (!w.contains(q.lane))
            continue;
        auto local = q;
        local.lane -= w.first;
        out.queued_probes.push_back(local);
        ids.insert(q.id);
        if (q.arrival_s > newest) {
            newest = q.arrival_s;
            out.m = q.position;
            out.last_probe_lane = local.lane;
        }
    }
    out.x_p = out.queued_probes.size();
    for (const auto& e : c.probe_exits)
        if (e.queued && ids.contains(e.id))
            out.probe_exits.push_back(e);
    return out;
}

/// Window model: the window's rows of W and lane rates. Roads keep their
/// nominal lane when it lies in the window and map to the nearest window lane
/// otherwise.
inline EstimationModel restrict_model(const EstimationModel& model, const VirtualWindow& w)
{
    EstimationModel out;
    out.p = model.p;
    out.red_s = model.red_s;
    const auto lanes = w.lanes();
    out.w = model.w.select_lanes({lanes.begin(), lanes.end()});
    for (auto l : lanes)
        out.lane_rates.push_back(model.lane_rates.at(l));
    out.topology.n_lanes = 3;
    out.topology.n_roads = model.topology.n_roads;
    for (std::size_t j = 0; j < model.topology.n_roads; ++j) {
        const auto nominal = model.topology.nominal_lane_of(j);
        out.topology.nominal_lane.push_back(std::clamp(nominal, w.first, w.first + 2) - w.first);
        for (std::size_t k = 0; k < 3; ++k)
            if (!model.topology.permitted(lanes[k], j))
                out.topology.forbidden.emplace_back(k, j);
    }
    return out;
}

/// Queue estimates of an n-lane observation: each window is estimated with
/// the 3-lane pipeline, then lanes are averaged over their windows.
inline std::array<NLaneEstimate, 4> estimate_cycle_nlane(const CycleObservation& c, const EstimationModel& model,
                                                         const EstimatorSelection& sel = {})
{
    const std::size_t n = c.n_lanes();
    std::array<std::map<VirtualWindow, std::array<double, 3>>, 4> per_window;
    for (const auto& w : enumerate_windows(n)) {
        const auto est = estimate_cycle(restrict_to_window(c, w), restrict_model(model, w), sel);
        for (std::size_t e = 0; e < kQueueEstimators.size(); ++e)
            per_window[e][w] = est.queue(kQueueEstimators[e]);
    }
    std::array<NLaneEstimate, 4> out;
    for (std::size_t e = 0; e < out.size(); ++e)
        out[e] = estimate_nlane(per_window[e], n);
    return out;
}

} // namespace qlest

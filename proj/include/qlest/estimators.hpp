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
#include "qlest/error.hpp"
#include "qlest/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

namespace qlest {

/// Nearest integer, halves rounded away from zero.
inline double round_half_away(double x) { return std::round(x); }

struct PenetrationTally {
    /// Probes queued at the end of red, summed over cycles.
    double queued_probes = 0.0;
    /// q_sat * sum over cycles and roads of the latest queued-probe exit time.
    double queue_span = 0.0;
};

/// Numerator and denominator of the penetration-ratio estimate, accumulated
/// over every cycle that is not flagged for overflow.
///
/// Only probes that were queued at the end of red enter either side: the
/// numerator counts them during red and the denominator locates the last of
/// them, per outgoing road, from their exit times during green.
inline PenetrationTally penetration_tally(std::span<const CycleObservation> cycles, double q_sat)
{
    PenetrationTally t;
    std::map<std::size_t, double> latest;
    for (const auto& c : cycles) {
        if (c.excluded())
            continue;
        t.queued_probes += static_cast<double>(c.x_p);
        latest.clear();
        for (const auto& e : c.probe_exits)
            if (e.queued)
                latest[e.road] = std::max(latest[e.road], e.t_e);
        for (auto [road, t_e] : latest)
            t.queue_span += q_sat * t_e;
    }
    return t;
}

/// Unclamped ratio-of-sums penetration estimate.
inline double estimate_p_raw(std::span<const CycleObservation> cycles, double q_sat)
{
    if (!(q_sat > 0.0))
        throw Error(ErrorCode::InvalidArgument, "saturation rate must be > 0");
    const auto t = penetration_tally(cycles, q_sat);
    if (!(t.queue_span > 0.0))
        throw Error(ErrorCode::NoProbeExits, "no queued probe left during green");
    return t.queued_probes / t.queue_span;
}

/// Penetration ratio estimate, clamped to [0, 1].
inline double estimate_p(std::span<const CycleObservation> cycles, double q_sat)
{
    return std::clamp(estimate_p_raw(cycles, q_sat), 0.0, 1.0);
}

inline double estimate_p(const SimTrace& trace, double q_sat) { return estimate_p(trace.cycles, q_sat); }

/// Arrival rate from probe arrivals during red: sum of increments / (p R #cycles).
inline double estimate_lambda(std::span<const CycleObservation> cycles, double p, double red_s)
{
    if (!(p > 0.0))
        throw Error(ErrorCode::ZeroPenetration, "arrival rate needs a positive penetration ratio");
    if (cycles.empty())
        throw Error(ErrorCode::Empty, "no cycles to estimate the arrival rate from");
    double arrivals = 0.0;
    for (const auto& c : cycles)
        arrivals += static_cast<double>(c.probe_arrivals_in_red);
    return arrivals / (p * red_s * static_cast<double>(cycles.size()));
}

inline double estimate_lambda(const SimTrace& trace, double p)
{
    return estimate_lambda(trace.cycles, p, trace.config.timing.red_s);
}

/// Share of probe exits per outgoing road.
inline std::vector<double> estimate_turn_ratios(std::span<const CycleObservation> cycles, std::size_t n_roads)
{
    std::vector<double> counts(n_roads, 0.0);
    double total = 0.0;
    for (const auto& c : cycles)
        for (const auto& e : c.probe_exits) {
            if (e.road >= n_roads)
                throw Error(ErrorCode::InvalidArgument, "probe exit to unknown road");
            counts[e.road] += 1.0;
            total += 1.0;
        }
    if (total == 0.0)
        throw Error(ErrorCode::NoProbeExits, "no probe exits to estimate turn ratios from");
    for (auto& x : counts)
        x /= total;
    return counts;
}

inline std::vector<double> estimate_turn_ratios(const SimTrace& trace)
{
    return estimate_turn_ratios(trace.cycles, trace.config.topology.n_roads);
}

/// Destinations of the probes that were queued at the end of red, as seen
/// from their exits.
inline std::vector<std::size_t> queued_probe_destinations(const CycleObservation& c)
{
    std::vector<std::size_t> out;
    for (const auto& e : c.probe_exits)
        if (e.queued)
            out.push_back(e.road);
    return out;
}

struct ProbeCountEstimate {
    std::vector<double> raw;
    std::vector<long> rounded;

    static ProbeCountEstimate from_raw(std::vector<double> raw)
    {
        ProbeCountEstimate e;
        e.rounded.reserve(raw.size());
        for (double x : raw)
            e.rounded.push_back(static_cast<long>(round_half_away(x)));
        e.raw = std::move(raw);
        return e;
    }
};

/// E0: every probe is credited to the nominal lane of its destination.
inline ProbeCountEstimate probe_counts_E0(std::span<const std::size_t> destinations, const JunctionTopology& topology)
{
    std::vector<double> raw(topology.n_lanes, 0.0);
    for (auto j : destinations)
        raw.at(topology.nominal_lane_of(j)) += 1.0;
    return ProbeCountEstimate::from_raw(std::move(raw));
}

inline ProbeCountEstimate probe_counts_E0(const CycleObservation& c, const JunctionTopology& topology)
{
    const auto dests = queued_probe_destinations(c);
    return probe_counts_E0(dests, topology);
}

/// E1: expected probes per lane, sum over probes of P(O = i | D = j_k) = w_ij / sum_i w_ij.
inline ProbeCountEstimate probe_counts_E1(std::span<const std::size_t> destinations, const AssignmentMatrix& w)
{
    std::vector<double> raw(w.n_lanes(), 0.0);
    for (auto j : destinations) {
        if (j >= w.n_roads())
            throw Error(ErrorCode::InvalidArgument, "destination out of range");
        const double column = w.col_sum(j);
        if (!(column > 0.0))
            throw Error(ErrorCode::ZeroColumn, "probe observed towards road " + std::to_string(j + 1) +
                                                   " which has zero assignment mass");
        for (std::size_t i = 0; i < w.n_lanes(); ++i)
            raw[i] += w(i, j) / column;
    }
    return ProbeCountEstimate::from_raw(std::move(raw));
}

inline ProbeCountEstimate probe_counts_E1(const CycleObservation& c, const AssignmentMatrix& w)
{
    const auto dests = queued_probe_destinations(c);
    return probe_counts_E1(dests, w);
}

struct PrimaryEstimates {
    double p_hat = 0.0;
    double p_hat_raw = 0.0;
    double lambda_hat = 0.0;
    std::vector<double> rho_hat;
    AssignmentMatrix w_hat;
    std::vector<double> lane_rates_hat;
};

/// The whole primary chain: p_hat, lambda_hat from p_hat, rho_hat from probe
/// exits, W_hat from rho_hat, and per-lane rates.
inline PrimaryEstimates estimate_primary(const SimTrace& trace)
{
    const auto& cfg = trace.config;
    PrimaryEstimates e;
    e.p_hat_raw = estimate_p_raw(trace.cycles, cfg.q_sat);
    e.p_hat = std::clamp(e.p_hat_raw, 0.0, 1.0);
    e.lambda_hat = estimate_lambda(trace.cycles, e.p_hat, cfg.timing.red_s);
    e.rho_hat = estimate_turn_ratios(trace);
    e.w_hat = solve_assignment(cfg.topology, TurnRatios{e.rho_hat});
    e.lane_rates_hat = lane_arrival_rates(e.w_hat, e.lambda_hat);
    return e;
}

} // namespace qlest

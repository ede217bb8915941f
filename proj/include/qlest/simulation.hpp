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
#include "qlest/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qlest {

struct SignalTiming {
    double red_s = 60.0;
    double green_s = 60.0;

    double cycle_s() const noexcept { return red_s + green_s; }

    void validate() const
    {
        if (!(red_s > 0.0) || !(green_s > 0.0))
            throw Error(ErrorCode::ValidationError, "signal timing needs red > 0 and green > 0");
    }
};

struct ScenarioConfig {
    std::string name = "custom";
    JunctionTopology topology = JunctionTopology::three_way();
    TurnRatios rho{{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}};
    /// Total arrival rate on the approach, veh/s.
    double lambda = 0.0;
    /// Probe penetration ratio.
    double p = 0.5;
    /// Saturation (discharge) rate per lane, veh/s.
    double q_sat = 1.0;
    SignalTiming timing{};
    double horizon_s = 9000.0;
    std::uint64_t seed = 1;
    /// When false, vehicles only arrive during red. Used to isolate the
    /// discharge of the red-phase queue.
    bool green_arrivals = true;

    void validate() const
    {
        topology.validate();
        rho.validate(topology.n_roads);
        timing.validate();
        if (!(p >= 0.0 && p <= 1.0))
            throw Error(ErrorCode::ValidationError, "penetration ratio must lie in [0,1]");
        if (!(lambda >= 0.0))
            throw Error(ErrorCode::ValidationError, "arrival rate must be >= 0");
        if (!(q_sat > 0.0))
            throw Error(ErrorCode::ValidationError, "saturation rate must be > 0");
        if (!(horizon_s >= 0.0))
            throw Error(ErrorCode::ValidationError, "horizon must be >= 0");
    }

    /// lambda * cycle * max_i w_i < q_sat * green: the busiest lane clears on
    /// average within one green phase.
    bool undersaturated(const AssignmentMatrix& w) const
    {
        double busiest = 0.0;
        for (std::size_t i = 0; i < w.n_lanes(); ++i)
            busiest = std::max(busiest, w.row_sum(i));
        return lambda * timing.cycle_s() * busiest < q_sat * timing.green_s;
    }
};

struct Vehicle {
    std::uint64_t id = 0;
    std::size_t lane = 0;
    std::size_t road = 0;
    bool probe = false;
    /// Absolute arrival time, s.
    double arrival_s = 0.0;
};

struct QueuedProbe {
    std::uint64_t id = 0;
    std::size_t lane = 0;
    std::size_t road = 0;
    /// 1-based index from the stop line within its lane.
    std::size_t position = 0;
    /// Arrival time relative to the start of this red phase (negative when
    /// carried over from an earlier cycle).
    double arrival_s = 0.0;
};

struct ProbeExit {
    std::uint64_t id = 0;
    std::size_t road = 0;
    /// Exit time measured from the start of green, s.
    double t_e = 0.0;
    /// The probe was in the queue at the end of red.
    bool queued = false;
};

/// Everything measurable about one signal cycle, captured at the end of red,
/// plus the probe exits of the green phase that follows.
struct CycleObservation {
    std::size_t cycle_index = 0;
    std::vector<std::size_t> true_queues;
    std::vector<std::size_t> probe_queues;
    /// Within-lane position of the most recently arrived queued probe, 0 if none.
    std::size_t m = 0;
    std::optional<std::size_t> last_probe_lane;
    std::size_t x_p = 0;
    std::vector<QueuedProbe> queued_probes;
    std::vector<ProbeExit> probe_exits;
    std::size_t probe_arrivals_in_red = 0;
    /// A lane still had vehicles when this cycle's green ended.
    bool overflow = false;
    /// A residual queue from the previous cycle was present when red began.
    bool carried_over = false;

    bool excluded() const noexcept { return overflow || carried_over; }
    std::size_t n_lanes() const noexcept { return true_queues.size(); }
};

struct SimTrace {
    ScenarioConfig config;
    AssignmentMatrix w;
    std::vector<CycleObservation> cycles;
    std::size_t arrivals = 0;
    std::size_t departures = 0;
    std::size_t in_system = 0;

    std::size_t excluded_cycles() const
    {
        return static_cast<std::size_t>(
            std::count_if(cycles.begin(), cycles.end(), [](const auto& c) { return c.excluded(); }));
    }
};

struct VehicleDraw {
    std::size_t road = 0;
    std::size_t lane = 0;
    bool probe = false;

    friend bool operator==(const VehicleDraw&, const VehicleDraw&) = default;
};

/// Draws (lane, road) pairs with probability w_ij by inversion on the
/// row-major cumulative table.
class VehicleSampler {
public:
    explicit VehicleSampler(const AssignmentMatrix& w) : n_roads_(w.n_roads())
    {
        cumulative_.reserve(w.data().size());
        double acc = 0.0;
        for (double x : w.data()) {
            acc += x;
            cumulative_.push_back(acc);
        }
        if (!(acc > 0.0))
            throw Error(ErrorCode::InvalidArgument, "assignment matrix has no mass");
        last_positive_ = cumulative_.size() - 1;
        while (last_positive_ > 0 && w.data()[last_positive_] <= 0.0)
            --last_positive_;
    }

    VehicleDraw draw(Rng& rng, double p) const
    {
        const double u = rng.uniform() * cumulative_.back();
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        auto k = static_cast<std::size_t>(it - cumulative_.begin());
        k = std::min(k, last_positive_);
        VehicleDraw out{k % n_roads_, k / n_roads_, false};
        out.probe = rng.bernoulli(p);
        return out;
    }

private:
    std::size_t n_roads_;
    std::size_t last_positive_ = 0;
    std::vector<double> cumulative_;
};

/// One vehicle's (road, lane) ~ W and probe flag ~ Bernoulli(p), independent.
inline VehicleDraw sample_vehicle(Rng& rng, const AssignmentMatrix& w, double p)
{
    return VehicleSampler(w).draw(rng, p);
}

struct ExitEvent {
    Vehicle vehicle;
    /// Offset from the start of green, s.
    double t_e = 0.0;
    bool was_queued = false;
};

struct DischargeResult {
    std::vector<ExitEvent> exits;
    std::deque<Vehicle> residual;
};

/// Green phase of one lane. The k-th queued vehicle (1-based) leaves at
/// k / q_sat. A green arrival at offset a joins the queue if some vehicle is
/// still waiting at a; otherwise it passes the stop line at a. Whatever has
/// not left by green_s is returned as residual, in FIFO order.
///
/// `green_arrivals` carry offsets from green start in `arrival_s` and must be
/// sorted by it.
inline DischargeResult discharge(std::deque<Vehicle> queue, double q_sat, double green_s,
                                 std::span<const Vehicle> green_arrivals = {})
{
    if (!(q_sat > 0.0))
        throw Error(ErrorCode::InvalidArgument, "saturation rate must be > 0");
    const double headway = 1.0 / q_sat;
    DischargeResult out;
    double last_exit = 0.0;
    bool blocked = false;
    std::size_t k = 0;
    for (auto& v : queue) {
        ++k;
        const double t = static_cast<double>(k) * headway;
        if (blocked || t > green_s) {
            blocked = true;
            out.residual.push_back(v);
            continue;
        }
        out.exits.push_back({v, t, true});
        last_exit = t;
    }
    for (const auto& v : green_arrivals) {
        if (blocked) {
            out.residual.push_back(v);
            continue;
        }
        double t;
        if (v.arrival_s >= last_exit)
            t = v.arrival_s; // nobody waiting: pass through
        else
            t = last_exit + headway;
        if (t > green_s) {
            blocked = true;
            out.residual.push_back(v);
            continue;
        }
        out.exits.push_back({v, t, false});
        last_exit = t;
    }
    return out;
}

/// Discrete-event run of one approach over floor(horizon / cycle) cycles.
/// Each cycle is red on [kC, kC + R) then green on [kC + R, (k + 1)C).
inline SimTrace run_simulation(const ScenarioConfig& config, const AssignmentMatrix& w)
{
    config.validate();
    if (w.n_lanes() != config.topology.n_lanes || w.n_roads() != config.topology.n_roads)
        throw Error(ErrorCode::InvalidArgument, "assignment matrix does not match topology");

    SimTrace trace;
    trace.config = config;
    trace.w = w;

    const std::size_t n = config.topology.n_lanes;
    const double red = config.timing.red_s;
    const double green = config.timing.green_s;
    const double cycle = config.timing.cycle_s();
    const auto n_cycles = static_cast<std::size_t>(std::floor(config.horizon_s / cycle));
    trace.cycles.reserve(n_cycles);

    Rng rng(config.seed);
    std::optional<VehicleSampler> sampler;
    if (config.lambda > 0.0)
        sampler.emplace(w);

    std::uint64_t next_id = 1;
    double next_arrival = config.lambda > 0.0 ? rng.exponential(config.lambda) : INFINITY;
    auto make_vehicle = [&](double t) {
        const auto d = sampler->draw(rng, config.p);
        ++trace.arrivals;
        return Vehicle{next_id++, d.lane, d.road, d.probe, t};
    };

    std::vector<std::deque<Vehicle>> lanes(n);
    for (std::size_t c = 0; c < n_cycles; ++c) {
        const double red_start = static_cast<double>(c) * cycle;
        const double green_start = red_start + red;
        const double cycle_end = red_start + cycle;

        CycleObservation obs;
        obs.cycle_index = c;
        obs.carried_over = std::any_of(lanes.begin(), lanes.end(), [](const auto& q) { return !q.empty(); });

        // The arrival clock keeps running through green even when green
        // arrivals are suppressed, so red-phase arrivals stay Poisson.
        while (next_arrival < green_start) {
            auto v = make_vehicle(next_arrival);
            if (v.probe)
                ++obs.probe_arrivals_in_red;
            lanes[v.lane].push_back(v);
            next_arrival += rng.exponential(config.lambda);
        }

        obs.true_queues.assign(n, 0);
        obs.probe_queues.assign(n, 0);
        double newest = -INFINITY;
        for (std::size_t i = 0; i < n; ++i) {
            obs.true_queues[i] = lanes[i].size();
            std::size_t pos = 0;
            for (const auto& v : lanes[i]) {
                ++pos;
                if (!v.probe)
                    continue;
                ++obs.probe_queues[i];
                obs.queued_probes.push_back({v.id, i, v.road, pos, v.arrival_s - red_start});
                if (v.arrival_s > newest) {
                    newest = v.arrival_s;
                    obs.m = pos;
                    obs.last_probe_lane = i;
                }
            }
            obs.x_p += obs.probe_queues[i];
        }

        const std::uint64_t first_green_id = next_id;
        std::vector<std::vector<Vehicle>> green_arrivals(n);
        while (next_arrival < cycle_end) {
            if (config.green_arrivals) {
                auto v = make_vehicle(next_arrival - green_start);
                green_arrivals[v.lane].push_back(v);
            }
            next_arrival += rng.exponential(config.lambda);
        }

        for (std::size_t i = 0; i < n; ++i) {
            auto res = discharge(std::move(lanes[i]), config.q_sat, green, green_arrivals[i]);
            trace.departures += res.exits.size();
            for (const auto& e : res.exits)
                if (e.vehicle.probe)
                    obs.probe_exits.push_back({e.vehicle.id, e.vehicle.road, e.t_e, e.was_queued});
            // Residual green arrivals carry green-relative times.
            for (auto& v : res.residual)
                if (v.id >= first_green_id)
                    v.arrival_s += green_start;
            obs.overflow = obs.overflow || !res.residual.empty();
            lanes[i] = std::move(res.residual);
        }
        std::stable_sort(obs.probe_exits.begin(), obs.probe_exits.end(),
                         [](const auto& a, const auto& b) { return a.t_e < b.t_e; });
        trace.cycles.push_back(std::move(obs));
    }
    for (const auto& q : lanes)
        trace.in_system += q.size();
    return trace;
}

inline SimTrace run_simulation(const ScenarioConfig& config)
{
    config.validate();
    return run_simulation(config, solve_assignment(config.topology, config.rho));
}

} // namespace qlest

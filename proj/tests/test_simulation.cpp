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
#include "qlest/simulation.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>

using namespace qlest;

namespace {

ScenarioConfig s1(double p = 0.5)
{
    ScenarioConfig c;
    c.name = "s1";
    c.rho = {{0.1, 0.8, 0.1}};
    c.lambda = 0.75;
    c.p = p;
    c.seed = 11;
    return c;
}

ScenarioConfig s2(double p = 0.5)
{
    auto c = s1(p);
    c.name = "s2";
    c.rho = {{0.7, 0.15, 0.15}};
    c.lambda = 0.5;
    return c;
}

std::deque<Vehicle> queue_of(std::size_t n)
{
    std::deque<Vehicle> q;
    for (std::size_t k = 0; k < n; ++k)
        q.push_back({k + 1, 0, 0, false, 0.0});
    return q;
}

struct Moments {
    double mean = 0.0;
    double var = 0.0;
};

Moments moments(const std::vector<double>& x)
{
    Moments m;
    m.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    for (double v : x)
        m.var += (v - m.mean) * (v - m.mean);
    m.var /= static_cast<double>(x.size() - 1);
    return m;
}

} // namespace

TEST(Rng, ReproducibleAndSplittable)
{
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i)
        ASSERT_EQ(a(), b());
    Rng c = Rng(42).split(1), d = Rng(42).split(2);
    EXPECT_NE(c(), d());
    EXPECT_EQ(Rng(42).split(1).seed(), derive_seed(42, 1));
    Rng u(3);
    for (int i = 0; i < 1000; ++i) {
        const double x = u.uniform();
        ASSERT_GE(x, 0.0);
        ASSERT_LT(x, 1.0);
    }
}

TEST(SampleVehicle, AsymmetricLeftTurnsUseLaneA)
{
    const auto w = solve_assignment(JunctionTopology::three_way(), {{0.7, 0.15, 0.15}});
    Rng rng(1);
    VehicleSampler sampler(w);
    for (int k = 0; k < 100000; ++k) {
        const auto v = sampler.draw(rng, 0.5);
        if (v.road == 0) {
            ASSERT_EQ(v.lane, 0u);
        }
    }
}

TEST(SampleVehicle, FullPenetrationTagsEveryVehicle)
{
    const auto w = solve_assignment(JunctionTopology::three_way(), {{0.1, 0.8, 0.1}});
    Rng rng(2);
    for (int k = 0; k < 10000; ++k)
        ASSERT_TRUE(sample_vehicle(rng, w, 1.0).probe);
    for (int k = 0; k < 10000; ++k)
        ASSERT_FALSE(sample_vehicle(rng, w, 0.0).probe);
}

TEST(SampleVehicle, JointFrequenciesFitAssignmentMatrix)
{
    const auto w = solve_assignment(JunctionTopology::three_way(), {{0.1, 0.8, 0.1}});
    constexpr int draws = 1000000;
    Rng rng(3);
    VehicleSampler sampler(w);
    std::map<std::pair<std::size_t, std::size_t>, double> counts;
    double probes = 0.0;
    for (int k = 0; k < draws; ++k) {
        const auto v = sampler.draw(rng, 0.3);
        counts[{v.lane, v.road}] += 1.0;
        probes += v.probe ? 1.0 : 0.0;
    }
    double chi2 = 0.0;
    int cells = 0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            const double expected = w(i, j) * draws;
            if (expected == 0.0) {
                EXPECT_EQ((counts[{i, j}]), 0.0);
                continue;
            }
            const double o = counts[{i, j}];
            chi2 += (o - expected) * (o - expected) / expected;
            ++cells;
        }
    const boost::math::chi_squared dist(cells - 1);
    EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.001);
    EXPECT_NEAR(probes / draws, 0.3, 5.0 * std::sqrt(0.3 * 0.7 / draws));
}

TEST(Discharge, DeterministicHeadway)
{
    const auto r = discharge(queue_of(5), 0.5, 30.0);
    ASSERT_EQ(r.exits.size(), 5u);
    for (std::size_t k = 0; k < 5; ++k) {
        EXPECT_DOUBLE_EQ(r.exits[k].t_e, 2.0 * static_cast<double>(k + 1));
        EXPECT_TRUE(r.exits[k].was_queued);
    }
    EXPECT_TRUE(r.residual.empty());
}

TEST(Discharge, ResidualWhenGreenTooShort)
{
    const auto r = discharge(queue_of(20), 0.5, 30.0);
    EXPECT_EQ(r.exits.size(), 15u);
    ASSERT_EQ(r.residual.size(), 5u);
    EXPECT_EQ(r.residual.front().id, 16u);
}

TEST(Discharge, EmptyQueue)
{
    const auto r = discharge({}, 0.5, 30.0);
    EXPECT_TRUE(r.exits.empty());
    EXPECT_TRUE(r.residual.empty());
}

TEST(Discharge, GreenArrivalsJoinOrPassThrough)
{
    std::vector<Vehicle> green{{10, 0, 0, false, 3.0}, {11, 0, 0, false, 9.0}, {12, 0, 0, false, 9.5}};
    const auto r = discharge(queue_of(2), 0.5, 30.0, green);
    ASSERT_EQ(r.exits.size(), 5u);
    EXPECT_DOUBLE_EQ(r.exits[2].t_e, 6.0); // joined behind the queue
    EXPECT_FALSE(r.exits[2].was_queued);
    EXPECT_DOUBLE_EQ(r.exits[3].t_e, 9.0); // empty lane: passes at arrival
    EXPECT_DOUBLE_EQ(r.exits[4].t_e, 9.5); // lane empty again: passes too
}

TEST(Simulation, NoArrivals)
{
    auto c = s1();
    c.lambda = 0.0;
    const auto t = run_simulation(c);
    EXPECT_EQ(t.cycles.size(), 75u);
    for (const auto& o : t.cycles) {
        EXPECT_EQ(o.true_queues, (std::vector<std::size_t>{0, 0, 0}));
        EXPECT_EQ(o.x_p, 0u);
        EXPECT_EQ(o.m, 0u);
        EXPECT_FALSE(o.last_probe_lane.has_value());
    }
}

TEST(Simulation, FullPenetrationSeesEveryVehicle)
{
    const auto t = run_simulation(s1(1.0));
    for (const auto& o : t.cycles) {
        EXPECT_EQ(o.probe_queues, o.true_queues);
        if (o.x_p == 0)
            continue;
        // The newest arrival is last in its lane.
        ASSERT_TRUE(o.last_probe_lane.has_value());
        EXPECT_EQ(o.m, o.true_queues[*o.last_probe_lane]);
    }
}

TEST(Simulation, CycleCountFollowsHorizon)
{
    auto c = s1();
    c.horizon_s = 1000.0;
    EXPECT_EQ(run_simulation(c).cycles.size(), 8u);
    c.horizon_s = 119.0;
    EXPECT_EQ(run_simulation(c).cycles.size(), 0u);
}

TEST(Simulation, ObservationInvariants)
{
    for (const auto& cfg : {s1(0.4), s2(0.7)}) {
        const auto t = run_simulation(cfg);
        for (const auto& o : t.cycles) {
            std::size_t total = 0, xp = 0, longest = 0;
            for (std::size_t i = 0; i < 3; ++i) {
                EXPECT_LE(o.probe_queues[i], o.true_queues[i]);
                total += o.true_queues[i];
                xp += o.probe_queues[i];
                longest = std::max(longest, o.true_queues[i]);
            }
            EXPECT_EQ(o.x_p, xp);
            EXPECT_LE(o.x_p, total);
            EXPECT_LE(o.m, longest);
            EXPECT_EQ(o.queued_probes.size(), o.x_p);
            std::map<std::uint64_t, std::size_t> lane_of;
            for (const auto& q : o.queued_probes)
                lane_of[q.id] = q.lane;
            std::size_t queued_exits = 0;
            for (const auto& e : o.probe_exits) {
                if (!e.queued)
                    continue;
                ++queued_exits;
                ASSERT_TRUE(lane_of.contains(e.id));
                EXPECT_TRUE(cfg.topology.permitted(lane_of[e.id], e.road));
            }
            if (!o.overflow) {
                EXPECT_EQ(queued_exits, o.x_p);
            }
        }
    }
}

TEST(Simulation, VehiclesAreConserved)
{
    for (auto cfg : {s1(0.3), s2(0.9)}) {
        cfg.horizon_s = 36000.0;
        const auto t = run_simulation(cfg);
        EXPECT_EQ(t.arrivals, t.departures + t.in_system);
        EXPECT_GT(t.arrivals, 0u);
    }
    // Oversaturated: residual queues carry over and are still conserved.
    auto heavy = s1(0.5);
    heavy.lambda = 3.0;
    const auto t = run_simulation(heavy);
    EXPECT_EQ(t.arrivals, t.departures + t.in_system);
    EXPECT_GT(t.excluded_cycles(), 0u);
}

TEST(Simulation, DeterministicGivenSeed)
{
    const auto a = run_simulation(s2(0.6));
    const auto b = run_simulation(s2(0.6));
    ASSERT_EQ(a.cycles.size(), b.cycles.size());
    for (std::size_t k = 0; k < a.cycles.size(); ++k) {
        const auto& x = a.cycles[k];
        const auto& y = b.cycles[k];
        ASSERT_EQ(x.true_queues, y.true_queues);
        ASSERT_EQ(x.probe_queues, y.probe_queues);
        ASSERT_EQ(x.m, y.m);
        ASSERT_EQ(x.probe_exits.size(), y.probe_exits.size());
        for (std::size_t e = 0; e < x.probe_exits.size(); ++e) {
            ASSERT_EQ(x.probe_exits[e].id, y.probe_exits[e].id);
            ASSERT_EQ(x.probe_exits[e].t_e, y.probe_exits[e].t_e);
        }
    }
    auto other = s2(0.6);
    other.seed = 12;
    const auto c = run_simulation(other);
    bool differs = false;
    for (std::size_t k = 0; k < a.cycles.size() && !differs; ++k)
        differs = a.cycles[k].true_queues != c.cycles[k].true_queues;
    EXPECT_TRUE(differs);
}

// With no carry-over the end-of-red queue of a lane is its red-phase arrival
// count, Poisson(lambda_i R) and independent across lanes.
TEST(Simulation, RedArrivalsSplitIntoIndependentPoissonStreams)
{
    for (auto cfg : {s1(0.5), s2(0.5)}) {
        cfg.horizon_s = 2500.0 * cfg.timing.cycle_s();
        const auto t = run_simulation(cfg);
        std::array<std::vector<double>, 3> lanes;
        std::vector<double> probes;
        for (const auto& o : t.cycles) {
            if (o.carried_over)
                continue;
            for (std::size_t i = 0; i < 3; ++i)
                lanes[i].push_back(static_cast<double>(o.true_queues[i]));
            probes.push_back(static_cast<double>(o.probe_arrivals_in_red));
        }
        ASSERT_GE(lanes[0].size(), 2000u);
        const auto rates = lane_arrival_rates(t.w, cfg.lambda);
        for (std::size_t i = 0; i < 3; ++i) {
            const auto m = moments(lanes[i]);
            const double se = std::sqrt(rates[i] * cfg.timing.red_s / static_cast<double>(lanes[i].size()));
            EXPECT_NEAR(m.mean, rates[i] * cfg.timing.red_s, 4.0 * se);
            EXPECT_GE(m.var / m.mean, 0.9) << cfg.name << " lane " << i;
            EXPECT_LE(m.var / m.mean, 1.1) << cfg.name << " lane " << i;
        }
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = i + 1; j < 3; ++j) {
                const auto mi = moments(lanes[i]);
                const auto mj = moments(lanes[j]);
                double cov = 0.0;
                for (std::size_t k = 0; k < lanes[i].size(); ++k)
                    cov += (lanes[i][k] - mi.mean) * (lanes[j][k] - mj.mean);
                cov /= static_cast<double>(lanes[i].size() - 1);
                EXPECT_LT(std::abs(cov / std::sqrt(mi.var * mj.var)), 0.05);
            }
        const auto mp = moments(probes);
        EXPECT_GE(mp.var / mp.mean, 0.9);
        EXPECT_LE(mp.var / mp.mean, 1.1);
        EXPECT_NEAR(mp.mean, cfg.p * cfg.lambda * cfg.timing.red_s, 0.05 * mp.mean);
    }
}

TEST(Simulation, UndersaturationCheck)
{
    const auto c = s1();
    EXPECT_TRUE(c.undersaturated(solve_assignment(c.topology, c.rho)));
    auto tight = c;
    tight.timing = {60.0, 40.0};
    tight.q_sat = 0.5;
    EXPECT_FALSE(tight.undersaturated(solve_assignment(c.topology, c.rho)));
}

TEST(Simulation, RejectsInvalidConfig)
{
    auto c = s1();
    c.p = 1.5;
    EXPECT_THROW(run_simulation(c), Error);
    c = s1();
    c.q_sat = 0.0;
    EXPECT_THROW(run_simulation(c), Error);
    c = s1();
    c.lambda = -1.0;
    EXPECT_THROW(run_simulation(c), Error);
}

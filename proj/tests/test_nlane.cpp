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
#include "qlest/nlane.hpp"

#include <gtest/gtest.h>

using namespace qlest;

namespace {

EstimationModel model_for(const SimTrace& t)
{
    const auto& c = t.config;
    return {c.p, lane_arrival_rates(t.w, c.lambda), c.timing.red_s, t.w, c.topology};
}

JunctionTopology four_lane()
{
    JunctionTopology t;
    t.n_lanes = 4;
    t.n_roads = 3;
    t.forbidden = {{2, 0}, {3, 0}, {0, 2}, {1, 2}};
    t.nominal_lane = {0, 1, 3};
    return t;
}

} // namespace

TEST(Windows, Enumeration)
{
    EXPECT_EQ(enumerate_windows(3), (std::vector<VirtualWindow>{{0}}));
    EXPECT_EQ(enumerate_windows(4), (std::vector<VirtualWindow>{{0}, {1}}));
    EXPECT_EQ(enumerate_windows(6).size(), 4u);
    EXPECT_EQ(enumerate_windows(4)[1].lanes(), (std::array<std::size_t, 3>{1, 2, 3}));
    try {
        enumerate_windows(2);
        FAIL();
    }
    catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TooFewLanes);
    }
}

TEST(Windows, LaneCoverage)
{
    for (std::size_t n = 3; n <= 10; ++n) {
        std::vector<std::size_t> count(n, 0);
        for (const auto& w : enumerate_windows(n))
            for (auto l : w.lanes())
                ++count[l];
        for (std::size_t l = 0; l < n; ++l)
            EXPECT_EQ(count[l], std::min({l, n - 3, n - 1 - l, std::size_t{2}}) + 1) << "n=" << n << " lane " << l;
    }
}

TEST(EstimateNLane, SingleWindowIsIdentity)
{
    const auto e = estimate_nlane({{{0}, {1.5, 2.5, 3.5}}}, 3);
    EXPECT_EQ(e.per_lane, (std::vector<double>{1.5, 2.5, 3.5}));
    EXPECT_EQ(e.contributing_windows, (std::vector<std::size_t>{1, 1, 1}));
}

TEST(EstimateNLane, OverlapIsAveraged)
{
    const auto e = estimate_nlane({{{0}, {1.0, 4.0, 2.0}}, {{1}, {6.0, 3.0, 9.0}}}, 4);
    EXPECT_EQ(e.per_lane, (std::vector<double>{1.0, 5.0, 2.5, 9.0}));
}

TEST(EstimateNLane, EdgeLaneHasOneWindow)
{
    const auto e = estimate_nlane({{{0}, {7.0, 1.0, 1.0}}, {{1}, {2.0, 2.0, 2.0}}, {{2}, {3.0, 3.0, 3.0}}}, 5);
    EXPECT_EQ(e.per_lane[0], 7.0);
    EXPECT_EQ(e.contributing_windows[0], 1u);
    EXPECT_EQ(e.contributing_windows[2], 3u);
}

TEST(EstimateNLane, MissingWindow)
{
    try {
        estimate_nlane({{{0}, {1.0, 1.0, 1.0}}}, 4);
        FAIL();
    }
    catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingWindow);
    }
}

TEST(EstimateNLane, StaysInsideWindowRange)
{
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 3 + static_cast<std::size_t>(rng.uniform() * 8);
        std::map<VirtualWindow, std::array<double, 3>> est;
        for (const auto& w : enumerate_windows(n))
            est[w] = {20.0 * rng.uniform(), 20.0 * rng.uniform(), 20.0 * rng.uniform()};
        const auto e = estimate_nlane(est, n);
        for (std::size_t l = 0; l < n; ++l) {
            double lo = 1e300, hi = -1e300;
            for (const auto& [w, v] : est)
                if (w.contains(l)) {
                    lo = std::min(lo, v[l - w.first]);
                    hi = std::max(hi, v[l - w.first]);
                }
            EXPECT_GE(e.per_lane[l], lo - 1e-12);
            EXPECT_LE(e.per_lane[l], hi + 1e-12);
        }
    }
}

TEST(RestrictToWindow, RecomputesObservation)
{
    CycleObservation c;
    c.true_queues = {4, 5, 3, 6};
    c.probe_queues = {1, 1, 0, 2};
    c.queued_probes = {{1, 0, 0, 2, 5.0}, {2, 1, 1, 4, 12.0}, {3, 3, 2, 1, 3.0}, {4, 3, 2, 5, 40.0}};
    c.m = 5;
    c.last_probe_lane = 3;
    c.x_p = 4;
    c.probe_exits = {{1, 0, 2.0, true}, {2, 1, 4.0, true}, {3, 2, 1.0, true}, {4, 2, 5.0, true}, {9, 1, 20.0, false}};

    const auto left = restrict_to_window(c, {0});
    EXPECT_EQ(left.true_queues, (std::vector<std::size_t>{4, 5, 3}));
    EXPECT_EQ(left.x_p, 2u);
    EXPECT_EQ(left.m, 4u); // newest probe among lanes 0..2 sits 4th in lane 1
    EXPECT_EQ(left.last_probe_lane, 1u);
    EXPECT_EQ(left.probe_exits.size(), 2u);

    const auto right = restrict_to_window(c, {1});
    EXPECT_EQ(right.x_p, 3u);
    EXPECT_EQ(right.m, 5u);
    EXPECT_EQ(right.last_probe_lane, 2u);
    EXPECT_EQ(right.queued_probes.front().lane, 0u);
}

TEST(NLanePipeline, ThreeLanesMatchExactly)
{
    ScenarioConfig cfg;
    cfg.rho = {{0.1, 0.8, 0.1}};
    cfg.lambda = 0.75;
    cfg.p = 0.4;
    cfg.horizon_s = 2400.0;
    const auto t = run_simulation(cfg);
    const auto model = model_for(t);
    for (const auto& c : t.cycles) {
        const auto direct = estimate_cycle(c, model);
        const auto windows = estimate_cycle_nlane(c, model);
        for (std::size_t e = 0; e < kQueueEstimators.size(); ++e) {
            const auto& a = direct.queue(kQueueEstimators[e]);
            for (std::size_t i = 0; i < 3; ++i)
                ASSERT_EQ(windows[e].per_lane[i], a[i]) << "estimator " << e << " lane " << i;
        }
    }
}

TEST(NLanePipeline, FourLanesAverageTheirWindows)
{
    ScenarioConfig cfg;
    cfg.topology = four_lane();
    cfg.rho = {{0.2, 0.6, 0.2}};
    cfg.lambda = 0.8;
    cfg.p = 0.5;
    cfg.horizon_s = 1200.0;
    const auto t = run_simulation(cfg);
    ASSERT_EQ(t.w.n_lanes(), 4u);
    const auto model = model_for(t);
    for (const auto& c : t.cycles) {
        const auto w0 = estimate_cycle(restrict_to_window(c, {0}), restrict_model(model, {0}));
        const auto w1 = estimate_cycle(restrict_to_window(c, {1}), restrict_model(model, {1}));
        const auto got = estimate_cycle_nlane(c, model);
        for (std::size_t e = 0; e < kQueueEstimators.size(); ++e) {
            const auto& a = w0.queue(kQueueEstimators[e]);
            const auto& b = w1.queue(kQueueEstimators[e]);
            const std::vector<double> expected{a[0], (a[1] + b[0]) / 2.0, (a[2] + b[1]) / 2.0, b[2]};
            EXPECT_EQ(got[e].per_lane, expected);
        }
    }
}

TEST(RestrictModel, KeepsWindowRows)
{
    ScenarioConfig cfg;
    cfg.topology = four_lane();
    cfg.rho = {{0.2, 0.6, 0.2}};
    const auto w = solve_assignment(cfg.topology, cfg.rho);
    EstimationModel model{0.5, lane_arrival_rates(w, 1.0), 60.0, w, cfg.topology};
    const auto r = restrict_model(model, {1});
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(r.lane_rates[k], model.lane_rates[k + 1]);
        for (std::size_t j = 0; j < 3; ++j)
            EXPECT_EQ(r.w(k, j), w(k + 1, j));
    }
    // Road 1 is nominally lane 0, outside the window: mapped to its nearest lane.
    EXPECT_EQ(r.topology.nominal_lane_of(0), 0u);
    EXPECT_EQ(r.topology.nominal_lane_of(2), 2u);
    EXPECT_FALSE(r.topology.permitted(1, 0));
}

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
#include "qlest/estimators.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace qlest;

namespace {

JunctionTopology diagonal()
{
    JunctionTopology t;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            if (i != j)
                t.forbidden.emplace_back(i, j);
    t.nominal_lane = {0, 1, 2};
    return t;
}

ScenarioConfig scenario(std::vector<double> rho, double lambda, double p, std::uint64_t seed)
{
    ScenarioConfig c;
    c.rho = {std::move(rho)};
    c.lambda = lambda;
    c.p = p;
    c.seed = seed;
    return c;
}

CycleObservation cycle_with_exits(const std::vector<std::size_t>& roads)
{
    CycleObservation c;
    c.true_queues = {0, 0, 0};
    c.probe_queues = {0, 0, 0};
    std::uint64_t id = 1;
    for (auto j : roads)
        c.probe_exits.push_back({id++, j, 2.0 * static_cast<double>(id), true});
    c.x_p = roads.size();
    return c;
}

template <class F>
ErrorCode code_of(F&& f)
{
    try {
        f();
    }
    catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::InvalidArgument;
}

} // namespace

TEST(EstimateP, SingleCycleSubstitution)
{
    CycleObservation c;
    c.x_p = 4;
    c.probe_exits = {{1, 0, 4.0, true}, {2, 0, 8.0, true}, {3, 0, 12.0, true}, {4, 0, 16.0, true}};
    const std::vector<CycleObservation> cycles{c};
    EXPECT_DOUBLE_EQ(estimate_p(cycles, 0.5), 0.5);
}

TEST(EstimateP, PassThroughExitsAreIgnored)
{
    CycleObservation c;
    c.x_p = 1;
    c.probe_exits = {{1, 0, 2.0, true}, {2, 0, 30.0, false}};
    const std::vector<CycleObservation> cycles{c};
    EXPECT_DOUBLE_EQ(estimate_p(cycles, 0.5), 1.0);
}

TEST(EstimateP, ExcludedCyclesDoNotCount)
{
    CycleObservation good;
    good.x_p = 2;
    good.probe_exits = {{1, 0, 8.0, true}};
    CycleObservation bad = good;
    bad.overflow = true;
    bad.x_p = 50;
    const std::vector<CycleObservation> cycles{good, bad};
    EXPECT_DOUBLE_EQ(estimate_p(cycles, 0.5), 0.5);
}

TEST(EstimateP, ExactAtFullPenetrationWithoutGreenArrivals)
{
    auto c = scenario({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, 0.6, 1.0, 5);
    c.topology = diagonal();
    c.green_arrivals = false;
    const auto t = run_simulation(c);
    EXPECT_DOUBLE_EQ(estimate_p_raw(t.cycles, c.q_sat), 1.0);
}

TEST(EstimateP, ScaleConsistent)
{
    const auto t = run_simulation(scenario({0.1, 0.8, 0.1}, 0.75, 0.4, 9));
    auto halved = t.cycles;
    for (auto& c : halved)
        for (auto& e : c.probe_exits)
            e.t_e /= 2.0;
    EXPECT_DOUBLE_EQ(estimate_p_raw(t.cycles, 1.0), estimate_p_raw(halved, 2.0));
}

TEST(EstimateP, ClampedToUnitInterval)
{
    CycleObservation c;
    c.x_p = 3;
    c.probe_exits = {{1, 0, 1.0, true}};
    const std::vector<CycleObservation> cycles{c};
    EXPECT_DOUBLE_EQ(estimate_p_raw(cycles, 1.0), 3.0);
    EXPECT_DOUBLE_EQ(estimate_p(cycles, 1.0), 1.0);
}

TEST(EstimateP, NoProbeExits)
{
    const std::vector<CycleObservation> cycles(3);
    EXPECT_EQ(code_of([&] { estimate_p(cycles, 1.0); }), ErrorCode::NoProbeExits);
}

TEST(EstimateLambda, Arithmetic)
{
    CycleObservation c;
    c.probe_arrivals_in_red = 15;
    std::vector<CycleObservation> cycles{c};
    EXPECT_DOUBLE_EQ(estimate_lambda(cycles, 0.2, 60.0), 1.25);
    cycles[0].probe_arrivals_in_red = 0;
    EXPECT_DOUBLE_EQ(estimate_lambda(cycles, 0.2, 60.0), 0.0);
    EXPECT_EQ(code_of([&] { estimate_lambda(cycles, 0.0, 60.0); }), ErrorCode::ZeroPenetration);
    EXPECT_EQ(code_of([&] { estimate_lambda(std::span<const CycleObservation>{}, 0.5, 60.0); }), ErrorCode::Empty);
}

TEST(EstimateLambda, AsymmetricScenarioTenHours)
{
    auto c = scenario({0.7, 0.15, 0.15}, 0.5, 0.4, 21);
    c.horizon_s = 36000.0;
    const auto t = run_simulation(c);
    EXPECT_LE(std::abs(estimate_lambda(t, 0.4) - 0.5) / 0.5, 0.05);
}

TEST(EstimateLambda, UnbiasedOverReplications)
{
    std::vector<double> x;
    for (std::uint64_t r = 0; r < 100; ++r) {
        auto c = scenario({0.1, 0.8, 0.1}, 0.75, 0.3, derive_seed(77, r));
        c.horizon_s = 3600.0;
        x.push_back(estimate_lambda(run_simulation(c), 0.3));
    }
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / 100.0;
    double var = 0.0;
    for (double v : x)
        var += (v - mean) * (v - mean);
    var /= 99.0;
    EXPECT_NEAR(mean, 0.75, 3.0 * std::sqrt(var / 100.0));
}

TEST(EstimateTurnRatios, Examples)
{
    std::vector<std::size_t> roads(7, 0);
    roads.insert(roads.end(), {1, 1, 2});
    const std::vector<CycleObservation> cycles{cycle_with_exits(roads)};
    const auto r = estimate_turn_ratios(cycles, 3);
    EXPECT_DOUBLE_EQ(r[0], 0.7);
    EXPECT_DOUBLE_EQ(r[1], 0.2);
    EXPECT_DOUBLE_EQ(r[2], 0.1);

    const std::vector<CycleObservation> one{cycle_with_exits({0, 0, 0})};
    EXPECT_EQ(estimate_turn_ratios(one, 3), (std::vector<double>{1.0, 0.0, 0.0}));

    const std::vector<CycleObservation> none(2);
    EXPECT_EQ(code_of([&] { estimate_turn_ratios(none, 3); }), ErrorCode::NoProbeExits);
}

TEST(EstimateTurnRatios, SymmetricScenarioTenHours)
{
    auto c = scenario({0.1, 0.8, 0.1}, 0.75, 0.3, 22);
    c.horizon_s = 36000.0;
    const auto r = estimate_turn_ratios(run_simulation(c));
    double total = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_LE(std::abs(r[j] - c.rho.rho[j]), 0.02);
        total += r[j];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(ProbeCountsE0, Examples)
{
    const auto t = JunctionTopology::three_way();
    const std::vector<std::size_t> dests{0, 0, 1, 2};
    EXPECT_EQ(probe_counts_E0(dests, t).rounded, (std::vector<long>{2, 1, 1}));
    EXPECT_EQ(probe_counts_E0(std::span<const std::size_t>{}, t).rounded, (std::vector<long>{0, 0, 0}));
}

TEST(ProbeCountsE1, SymmetricMatrixSplitsThroughProbe)
{
    const auto w = solve_assignment(JunctionTopology::three_way(), {{0.1, 0.8, 0.1}});
    const std::vector<std::size_t> dests{1};
    const auto e = probe_counts_E1(dests, w);
    EXPECT_NEAR(e.raw[0], 0.2917, 5e-4);
    EXPECT_NEAR(e.raw[1], 0.4167, 5e-4);
    EXPECT_NEAR(e.raw[2], 0.2917, 5e-4);
    EXPECT_EQ(e.rounded, (std::vector<long>{0, 0, 0}));
}

TEST(ProbeCountsE1, AsymmetricMatrixIsDegenerate)
{
    const auto w = solve_assignment(JunctionTopology::three_way(), {{0.7, 0.15, 0.15}});
    const std::vector<std::size_t> dests{0, 0, 2};
    const auto e = probe_counts_E1(dests, w);
    EXPECT_NEAR(e.raw[0], 2.0, 1e-9);
    EXPECT_NEAR(e.raw[1], 0.0, 1e-9);
    EXPECT_NEAR(e.raw[2], 1.0, 1e-9);
    EXPECT_EQ(e.rounded, (std::vector<long>{2, 0, 1}));
    EXPECT_EQ(probe_counts_E1(std::span<const std::size_t>{}, w).rounded, (std::vector<long>{0, 0, 0}));
}

TEST(ProbeCountsE1, ZeroColumn)
{
    const auto w = solve_assignment(JunctionTopology::three_way(), {{0.0, 0.9, 0.1}});
    const std::vector<std::size_t> dests{0};
    EXPECT_EQ(code_of([&] { probe_counts_E1(dests, w); }), ErrorCode::ZeroColumn);
}

TEST(ProbeCountsE1, RawSumsToQueuedProbes)
{
    const auto t = run_simulation(scenario({0.1, 0.8, 0.1}, 0.75, 0.6, 31));
    for (const auto& c : t.cycles) {
        const auto e = probe_counts_E1(c, t.w);
        EXPECT_NEAR(std::accumulate(e.raw.begin(), e.raw.end(), 0.0), static_cast<double>(c.x_p), 1e-9);
        for (std::size_t i = 0; i < 3; ++i) {
            EXPECT_GE(e.rounded[i], 0);
            EXPECT_LE(std::abs(static_cast<double>(e.rounded[i]) - e.raw[i]), 0.5);
        }
    }
}

TEST(Rounding, HalvesAwayFromZero)
{
    EXPECT_EQ(round_half_away(0.5), 1.0);
    EXPECT_EQ(round_half_away(1.5), 2.0);
    EXPECT_EQ(round_half_away(2.5), 3.0);
    EXPECT_EQ(round_half_away(0.49), 0.0);
}

namespace {

// Per-lane MAE of E0 and E1 against the true probe counts, pooled over cycles
// and replications.
std::array<std::array<double, 3>, 2> probe_count_mae(std::vector<double> rho, double lambda, double p,
                                                      std::size_t reps)
{
    std::array<std::array<double, 3>, 2> err{};
    double n = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
        auto c = scenario(rho, lambda, p, derive_seed(1234, r));
        c.horizon_s = 36000.0;
        const auto t = run_simulation(c);
        for (const auto& o : t.cycles) {
            if (o.excluded())
                continue;
            const auto e0 = probe_counts_E0(o, c.topology);
            const auto e1 = probe_counts_E1(o, t.w);
            for (std::size_t i = 0; i < 3; ++i) {
                err[0][i] += std::abs(static_cast<double>(e0.rounded[i]) - static_cast<double>(o.probe_queues[i]));
                err[1][i] += std::abs(static_cast<double>(e1.rounded[i]) - static_cast<double>(o.probe_queues[i]));
            }
            n += 1.0;
        }
    }
    for (auto& row : err)
        for (auto& x : row)
            x /= n;
    return err;
}

} // namespace

TEST(ProbeCounts, E1NoWorseThanE0OnAsymmetricScenario)
{
    for (double p : {0.2, 0.4, 0.6, 0.8}) {
        const auto err = probe_count_mae({0.7, 0.15, 0.15}, 0.5, p, 10);
        for (std::size_t i = 0; i < 3; ++i)
            EXPECT_LE(err[1][i], err[0][i] + 0.05) << "p=" << p << " lane " << i;
    }
}

// Every road of the asymmetric scenario is fed by one lane, so both
// estimators are exact there; the growth of E0's error with p shows on the
// symmetric scenario, where through traffic is spread over three lanes.
TEST(ProbeCounts, E0ErrorGrowsLinearlyWithPenetration)
{
    std::vector<double> ps{0.2, 0.4, 0.6, 0.8};
    std::vector<double> err;
    for (double p : ps) {
        const auto e = probe_count_mae({0.1, 0.8, 0.1}, 0.75, p, 2);
        err.push_back((e[0][0] + e[0][1] + e[0][2]) / 3.0);
    }
    for (std::size_t k = 1; k < err.size(); ++k)
        EXPECT_GT(err[k], err[k - 1]);
    // Least-squares fit through the points; a straight line explains them.
    const double mp = 0.5;
    const double me = std::accumulate(err.begin(), err.end(), 0.0) / 4.0;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        sxy += (ps[k] - mp) * (err[k] - me);
        sxx += (ps[k] - mp) * (ps[k] - mp);
        syy += (err[k] - me) * (err[k] - me);
    }
    EXPECT_GT(sxy * sxy / (sxx * syy), 0.98);

    const auto s2 = probe_count_mae({0.7, 0.15, 0.15}, 0.5, 0.8, 1);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(s2[0][i], 0.0);
        EXPECT_EQ(s2[1][i], 0.0);
    }
}

TEST(EstimatePrimary, Chain)
{
    auto c = scenario({0.1, 0.8, 0.1}, 0.75, 0.5, 41);
    c.horizon_s = 36000.0;
    const auto t = run_simulation(c);
    const auto e = estimate_primary(t);
    EXPECT_GE(e.p_hat, 0.0);
    EXPECT_LE(e.p_hat, 1.0);
    EXPECT_DOUBLE_EQ(e.lambda_hat, estimate_lambda(t, e.p_hat));
    EXPECT_NEAR(std::accumulate(e.rho_hat.begin(), e.rho_hat.end(), 0.0), 1.0, 1e-12);
    const auto rates = lane_arrival_rates(e.w_hat, e.lambda_hat);
    EXPECT_EQ(rates, e.lane_rates_hat);
}

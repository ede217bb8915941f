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

#include "qlest/config.hpp"
#include "qlest/csv.hpp"
#include "qlest/error.hpp"
#include "qlest/estimators.hpp"
#include "qlest/nlane.hpp"
#include "qlest/pipeline.hpp"
#include "qlest/rng.hpp"
#include "qlest/simulation.hpp"
#include "qlest/trace_io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace qlest {

/// Mean absolute error.
inline double mae(std::span<const double> estimates, std::span<const double> truths)
{
    if (estimates.size() != truths.size())
        throw Error(ErrorCode::LengthMismatch, "estimates and truths differ in length");
    if (estimates.empty())
        throw Error(ErrorCode::Empty, "mean absolute error of an empty series");
    double sum = 0.0;
    for (std::size_t k = 0; k < estimates.size(); ++k)
        sum += std::abs(estimates[k] - truths[k]);
    return sum / static_cast<double>(estimates.size());
}

/// Per-lane estimators evaluated cycle by cycle against the simulated truth.
inline constexpr std::array<Estimator, 6> kLaneEstimators{Estimator::MBaseline, Estimator::Prop1, Estimator::Prop2,
                                                          Estimator::Prop3,     Estimator::E0,    Estimator::E1};

inline constexpr bool is_queue_estimator(Estimator e)
{
    return e == Estimator::MBaseline || e == Estimator::Prop1 || e == Estimator::Prop2 || e == Estimator::Prop3;
}

/// Where the parameters of the conditional laws came from.
enum class ParamSource { Estimated, Oracle, Fallback };

inline constexpr std::string_view name_of(ParamSource s)
{
    switch (s) {
    case ParamSource::Estimated: return "estimated";
    case ParamSource::Oracle: return "oracle";
    case ParamSource::Fallback: return "fallback";
    }
    return "?";
}

/// Outcome of one (p, replication) run.
struct ReplicationResult {
    double p_true = 0.0;
    std::size_t p_index = 0;
    std::size_t replication = 0;
    std::uint64_t seed = 0;
    double lambda_true = 0.0;
    /// NaN when the trace had no queued probe exits.
    double p_hat = std::numeric_limits<double>::quiet_NaN();
    double p_hat_raw = std::numeric_limits<double>::quiet_NaN();
    double lambda_hat = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> rho_hat;
    ParamSource params = ParamSource::Estimated;
    std::size_t cycles = 0;
    std::size_t excluded_cycles = 0;
    /// Sum over included cycles of |estimate - truth|, per lane.
    std::map<Estimator, std::vector<double>> abs_error;
    /// Per-cycle estimates, when requested.
    std::vector<std::map<Estimator, std::vector<double>>> per_cycle;

    bool has_primary() const { return !std::isnan(p_hat); }
    std::size_t included_cycles() const { return cycles - excluded_cycles; }
    double lane_mae(Estimator e, std::size_t lane) const
    {
        return included_cycles() ? abs_error.at(e).at(lane) / static_cast<double>(included_cycles()) : 0.0;
    }
};

struct MaeRow {
    Estimator estimator = Estimator::MBaseline;
    /// Lane index; empty for scalar estimators (p-hat, lambda-hat).
    std::optional<std::size_t> lane;
    double p = 0.0;
    double mae = 0.0;
    std::size_t replications = 0;
    double horizon_s = 0.0;
    std::size_t cycles = 0;
    std::size_t excluded_cycles = 0;
};

struct MaeTable {
    std::vector<MaeRow> rows;

    const MaeRow* find(Estimator e, std::optional<std::size_t> lane, double p) const
    {
        for (const auto& r : rows)
            if (r.estimator == e && r.lane == lane && std::abs(r.p - p) < 1e-12)
                return &r;
        return nullptr;
    }

    double at(Estimator e, std::optional<std::size_t> lane, double p) const
    {
        if (const auto* r = find(e, lane, p))
            return r->mae;
        throw Error(ErrorCode::InvalidArgument, "no MAE row for " + std::string(name_of(e)));
    }
};

struct RunOptions {
    /// Worker threads; 0 picks the hardware concurrency.
    std::size_t threads = 0;
    /// Keep every per-cycle estimate in the results.
    bool keep_cycles = false;
};

struct ExperimentResult {
    ExperimentSpec spec;
    std::size_t n_lanes = 0;
    /// Ordered by (p index, replication).
    std::vector<ReplicationResult> runs;
    MaeTable table;
};

/// Seed of replication `r` at grid point `k`.
inline std::uint64_t replication_seed(std::uint64_t master, std::size_t k, std::size_t r)
{
    return derive_seed(derive_seed(master, k), r);
}

inline EstimationModel oracle_model(const ScenarioConfig& cfg, const AssignmentMatrix& w)
{
    return {cfg.p, lane_arrival_rates(w, cfg.lambda), cfg.timing.red_s, w, cfg.topology};
}

/// Primary estimates and the per-cycle lane estimators on one trace.
inline ReplicationResult evaluate_trace(const SimTrace& trace, const ExperimentSpec& spec, bool keep_cycles = false)
{
    const auto& cfg = trace.config;
    const std::size_t n = cfg.topology.n_lanes;
    ReplicationResult out;
    out.p_true = cfg.p;
    out.seed = cfg.seed;
    out.lambda_true = cfg.lambda;
    out.cycles = trace.cycles.size();
    out.excluded_cycles = trace.excluded_cycles();

    std::optional<EstimationModel> estimated;
    try {
        const auto pe = estimate_primary(trace);
        out.p_hat = pe.p_hat;
        out.p_hat_raw = pe.p_hat_raw;
        out.lambda_hat = pe.lambda_hat;
        out.rho_hat = pe.rho_hat;
        estimated = EstimationModel{pe.p_hat, pe.lane_rates_hat, cfg.timing.red_s, pe.w_hat, cfg.topology};
    }
    catch (const Error& e) {
        if (e.code() != ErrorCode::NoProbeExits && e.code() != ErrorCode::ZeroPenetration &&
            e.code() != ErrorCode::Empty)
            throw;
    }
    EstimationModel model;
    if (spec.oracle_params) {
        model = oracle_model(cfg, trace.w);
        out.params = ParamSource::Oracle;
    }
    else if (estimated && estimated->p > 0.0) {
        model = *estimated;
    }
    else {
        model = oracle_model(cfg, trace.w);
        out.params = ParamSource::Fallback;
    }

    for (auto e : kLaneEstimators)
        if (spec.uses(e))
            out.abs_error[e].assign(n, 0.0);
    const bool any_queue = spec.uses(Estimator::MBaseline) || spec.uses(Estimator::Prop1) ||
                           spec.uses(Estimator::Prop2) || spec.uses(Estimator::Prop3);
    const EstimatorSelection sel{spec.uses(Estimator::Prop1), spec.uses(Estimator::Prop2),
                                 spec.uses(Estimator::Prop3)};

    for (const auto& c : trace.cycles) {
        if (c.excluded())
            continue;
        std::map<Estimator, std::vector<double>> est;
        if (spec.uses(Estimator::E0))
            est[Estimator::E0] = [&] {
                const auto r = probe_counts_E0(c, model.topology).rounded;
                return std::vector<double>(r.begin(), r.end());
            }();
        if (spec.uses(Estimator::E1))
            est[Estimator::E1] = [&] {
                const auto r = probe_counts_E1(c, model.w).rounded;
                return std::vector<double>(r.begin(), r.end());
            }();
        if (any_queue) {
            if (n == 3) {
                const auto ce = estimate_cycle(c, model, sel);
                for (auto q : kQueueEstimators) {
                    const auto& a = ce.queue(q);
                    est[kLaneEstimators[static_cast<std::size_t>(q)]] = {a.begin(), a.end()};
                }
            }
            else {
                const auto ne = estimate_cycle_nlane(c, model, sel);
                for (std::size_t q = 0; q < ne.size(); ++q)
                    est[kLaneEstimators[q]] = ne[q].per_lane;
            }
        }
        for (auto& [e, values] : out.abs_error) {
            const auto& truth = (e == Estimator::E0 || e == Estimator::E1) ? c.probe_queues : c.true_queues;
            const auto& x = est.at(e);
            for (std::size_t i = 0; i < n; ++i)
                values[i] += std::abs(x[i] - static_cast<double>(truth[i]));
        }
        if (keep_cycles) {
            std::erase_if(est, [&](const auto& kv) { return !spec.uses(kv.first); });
            out.per_cycle.push_back(std::move(est));
        }
    }
    return out;
}

/// MAE rows pooled over the included cycles of every replication at each p.
inline MaeTable aggregate(const ExperimentSpec& spec, std::span<const ReplicationResult> runs, std::size_t n_lanes)
{
    MaeTable t;
    for (auto e : kLaneEstimators) {
        if (!spec.uses(e))
            continue;
        for (std::size_t i = 0; i < n_lanes; ++i)
            for (std::size_t k = 0; k < spec.p_grid.size(); ++k) {
                MaeRow row{e, i, spec.p_grid[k], 0.0, 0, spec.horizon_s, 0, 0};
                double sum = 0.0;
                for (const auto& r : runs) {
                    if (r.p_index != k)
                        continue;
                    ++row.replications;
                    row.cycles += r.cycles;
                    row.excluded_cycles += r.excluded_cycles;
                    sum += r.abs_error.at(e).at(i);
                }
                const auto used = row.cycles - row.excluded_cycles;
                row.mae = used ? sum / static_cast<double>(used) : 0.0;
                t.rows.push_back(row);
            }
    }
    // Scalar estimators: mean absolute error over replications that produced an estimate.
    for (auto e : {Estimator::PHat, Estimator::LambdaHat}) {
        if (!spec.uses(e))
            continue;
        for (std::size_t k = 0; k < spec.p_grid.size(); ++k) {
            std::vector<double> est, truth;
            MaeRow row{e, std::nullopt, spec.p_grid[k], 0.0, 0, spec.horizon_s, 0, 0};
            for (const auto& r : runs) {
                if (r.p_index != k || !r.has_primary())
                    continue;
                ++row.replications;
                row.cycles += r.cycles;
                row.excluded_cycles += r.excluded_cycles;
                est.push_back(e == Estimator::PHat ? r.p_hat : r.lambda_hat);
                truth.push_back(e == Estimator::PHat ? r.p_true : r.lambda_true);
            }
            if (est.empty())
                continue;
            row.mae = mae(est, truth);
            t.rows.push_back(row);
        }
    }
    return t;
}

/// Runs every (p, replication) pair on a worker pool. Results do not depend
/// on the number of threads.
inline ExperimentResult run_experiment(const ExperimentSpec& spec, const RunOptions& opt = {})
{
    spec.validate();
    ExperimentResult result;
    result.spec = spec;
    result.n_lanes = spec.scenario.topology.n_lanes;
    const auto w = solve_assignment(spec.scenario.topology, spec.scenario.rho);

    const std::size_t total = spec.p_grid.size() * spec.replications;
    result.runs.resize(total);
    std::vector<std::exception_ptr> errors(total);
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        for (std::size_t idx; (idx = next.fetch_add(1)) < total;) {
            const std::size_t k = idx / spec.replications;
            const std::size_t r = idx % spec.replications;
            try {
                auto cfg = spec.scenario;
                cfg.p = spec.p_grid[k];
                cfg.horizon_s = spec.horizon_s;
                cfg.seed = replication_seed(spec.scenario.seed, k, r);
                const auto trace = run_simulation(cfg, w);
                auto res = evaluate_trace(trace, spec, opt.keep_cycles);
                res.p_index = k;
                res.replication = r;
                result.runs[idx] = std::move(res);
            }
            catch (const Error& e) {
                errors[idx] = std::make_exception_ptr(
                    Error(e.code(), "p=" + csv::format(spec.p_grid[k]) + ", replication=" + std::to_string(r + 1) +
                                        ": " + e.what()));
            }
            catch (...) {
                errors[idx] = std::current_exception();
            }
        }
    };

    std::size_t threads = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, total);
    if (threads <= 1) {
        work();
    }
    else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back(work);
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);

    result.table = aggregate(spec, result.runs, result.n_lanes);
    return result;
}

inline std::string lane_name(std::optional<std::size_t> lane)
{
    return lane ? lane_label(*lane, false) : std::string("all");
}

inline void write_mae_csv(std::ostream& os, const MaeTable& t)
{
    csv::write_row(os, {"estimator", "lane", "p", "mae", "replications", "horizon_s", "cycles", "excluded_cycles"});
    for (const auto& r : t.rows)
        csv::write_row(os, {std::string(name_of(r.estimator)), lane_name(r.lane), csv::format(r.p), csv::format(r.mae),
                            csv::format(r.replications), csv::format(r.horizon_s), csv::format(r.cycles),
                            csv::format(r.excluded_cycles)});
}

inline void write_primary_csv(std::ostream& os, const ExperimentResult& res)
{
    const std::size_t d = res.spec.scenario.topology.n_roads;
    std::vector<std::string> header{"p_true", "p_hat", "lambda_hat"};
    for (std::size_t j = 0; j < d; ++j)
        header.push_back("rho_hat_" + std::to_string(j + 1));
    for (const char* h : {"replication", "lambda_true", "p_hat_raw", "params"})
        header.emplace_back(h);
    csv::write_row(os, header);
    for (const auto& r : res.runs) {
        std::vector<std::string> row{csv::format(r.p_true), csv::format(r.p_hat), csv::format(r.lambda_hat)};
        for (std::size_t j = 0; j < d; ++j)
            row.push_back(r.rho_hat.empty() ? csv::format(std::numeric_limits<double>::quiet_NaN())
                                            : csv::format(r.rho_hat[j]));
        row.push_back(csv::format(r.replication + 1));
        row.push_back(csv::format(r.lambda_true));
        row.push_back(csv::format(r.p_hat_raw));
        row.emplace_back(name_of(r.params));
        csv::write_row(os, row);
    }
}

/// One row per (scenario, p, replication) with its primary estimates and
/// per-lane MAE of every lane estimator.
inline void write_estimates_csv(std::ostream& os, const ExperimentResult& res)
{
    const auto& spec = res.spec;
    const std::size_t d = spec.scenario.topology.n_roads;
    std::vector<Estimator> lane_estimators;
    for (auto e : {Estimator::E0, Estimator::E1, Estimator::MBaseline, Estimator::Prop1, Estimator::Prop2,
                   Estimator::Prop3})
        if (spec.uses(e))
            lane_estimators.push_back(e);

    std::vector<std::string> header{"scenario", "p_true", "replication", "p_hat", "lambda_true", "lambda_hat"};
    for (std::size_t j = 0; j < d; ++j)
        header.push_back("rho_hat_" + std::to_string(j + 1));
    for (auto e : lane_estimators)
        for (std::size_t i = 0; i < res.n_lanes; ++i)
            header.push_back("mae_" + std::string(name_of(e)) + "_" + lane_label(i, false));
    header.emplace_back("cycles");
    header.emplace_back("excluded_cycles");
    csv::write_row(os, header);

    for (const auto& r : res.runs) {
        std::vector<std::string> row{spec.scenario.name,        csv::format(r.p_true),    csv::format(r.replication + 1),
                                     csv::format(r.p_hat),      csv::format(r.lambda_true), csv::format(r.lambda_hat)};
        for (std::size_t j = 0; j < d; ++j)
            row.push_back(r.rho_hat.empty() ? csv::format(std::numeric_limits<double>::quiet_NaN())
                                            : csv::format(r.rho_hat[j]));
        for (auto e : lane_estimators)
            for (std::size_t i = 0; i < res.n_lanes; ++i)
                row.push_back(csv::format(r.lane_mae(e, i)));
        row.push_back(csv::format(r.cycles));
        row.push_back(csv::format(r.excluded_cycles));
        csv::write_row(os, row);
    }
}

/// Penetration estimate against the true ratio, averaged over replications.
inline void write_plot_penetration(std::ostream& os, const ExperimentResult& res)
{
    csv::write_row(os, {"p_true", "p_hat_mean", "abs_error", "replications"});
    for (std::size_t k = 0; k < res.spec.p_grid.size(); ++k) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& r : res.runs)
            if (r.p_index == k && r.has_primary()) {
                sum += r.p_hat;
                ++count;
            }
        const double mean = count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
        csv::write_row(os, {csv::format(res.spec.p_grid[k]), csv::format(mean),
                            csv::format(std::abs(mean - res.spec.p_grid[k])), csv::format(count)});
    }
}

/// Long-format MAE curves of the selected estimators.
inline void write_plot_mae(std::ostream& os, const ExperimentResult& res, std::span<const Estimator> which)
{
    csv::write_row(os, {"estimator", "lane", "p", "mae"});
    for (auto e : which)
        for (const auto& r : res.table.rows)
            if (r.estimator == e)
                csv::write_row(os, {std::string(name_of(e)), lane_name(r.lane), csv::format(r.p), csv::format(r.mae)});
}

/// Writes mae.csv, primary.csv, estimates.csv and the plot-data files.
/// Returns the paths written.
inline std::vector<std::filesystem::path> write_experiment_outputs(const ExperimentResult& res,
                                                                   const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    auto emit = [&](const char* name, auto&& body) {
        const auto path = dir / name;
        std::ofstream os(path, std::ios::binary);
        if (!os)
            throw Error(ErrorCode::IoError, "cannot write " + path.string());
        body(os);
        written.push_back(path);
    };
    emit("mae.csv", [&](std::ostream& os) { write_mae_csv(os, res.table); });
    emit("primary.csv", [&](std::ostream& os) { write_primary_csv(os, res); });
    emit("estimates.csv", [&](std::ostream& os) { write_estimates_csv(os, res); });
    if (res.spec.uses(Estimator::PHat))
        emit("plot_penetration.csv", [&](std::ostream& os) { write_plot_penetration(os, res); });
    std::vector<Estimator> counts, queues;
    for (auto e : kLaneEstimators)
        if (res.spec.uses(e))
            (is_queue_estimator(e) ? queues : counts).push_back(e);
    if (!counts.empty())
        emit("plot_probe_counts.csv", [&](std::ostream& os) { write_plot_mae(os, res, counts); });
    if (!queues.empty())
        emit("plot_queue_mae.csv", [&](std::ostream& os) { write_plot_mae(os, res, queues); });
    return written;
}

} // namespace qlest

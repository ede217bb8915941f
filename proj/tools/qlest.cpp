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
#include "qlest/qlest.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
};

qlest::ExperimentSpec load(const Common& c)
{
    auto spec = qlest::load_config(c.config);
    if (c.seed)
        spec.scenario.seed = *c.seed;
    for (const auto& w : spec.warnings)
        std::cerr << "warning: " << w << '\n';
    return spec;
}

std::ofstream open_out(const fs::path& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw qlest::Error(qlest::ErrorCode::IoError, "cannot write " + path.string());
    return os;
}

std::ifstream open_in(const fs::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw qlest::Error(qlest::ErrorCode::IoError, "cannot read " + path.string());
    return is;
}

int run_simulate(const Common& c, std::optional<double> p)
{
    auto spec = load(c);
    auto cfg = spec.scenario;
    if (p)
        cfg.p = *p;
    cfg.validate();
    const auto trace = qlest::run_simulation(cfg);
    fs::create_directories(c.out_dir);
    {
        auto os = open_out(fs::path(c.out_dir) / "trace_cycles.csv");
        qlest::write_trace_cycles(os, trace);
    }
    {
        auto os = open_out(fs::path(c.out_dir) / "trace_exits.csv");
        qlest::write_trace_exits(os, trace);
    }
    {
        auto os = open_out(fs::path(c.out_dir) / "trace_probes.csv");
        qlest::write_trace_probes(os, trace);
    }
    std::cout << "cycles " << trace.cycles.size() << ", excluded " << trace.excluded_cycles() << ", arrivals "
              << trace.arrivals << ", departures " << trace.departures << '\n';
    return 0;
}

int run_estimate(const Common& c, const std::string& trace_dir, bool oracle, std::optional<double> p)
{
    auto spec = load(c);
    spec.oracle_params = oracle;
    auto cfg = spec.scenario;
    if (p)
        cfg.p = *p;
    cfg.validate();

    qlest::SimTrace trace;
    trace.config = cfg;
    trace.w = qlest::solve_assignment(cfg.topology, cfg.rho);
    {
        auto cycles = open_in(fs::path(trace_dir) / "trace_cycles.csv");
        auto exits = open_in(fs::path(trace_dir) / "trace_exits.csv");
        std::ifstream probes(fs::path(trace_dir) / "trace_probes.csv", std::ios::binary);
        trace.cycles = qlest::read_trace(cycles, exits, probes ? &probes : nullptr, cfg.topology.n_lanes);
    }

    auto rep = qlest::evaluate_trace(trace, spec, true);
    qlest::ExperimentResult res;
    spec.p_grid = {cfg.p};
    spec.replications = 1;
    spec.horizon_s = static_cast<double>(trace.cycles.size()) * cfg.timing.cycle_s();
    res.spec = spec;
    res.n_lanes = cfg.topology.n_lanes;
    res.runs = {rep};
    res.table = qlest::aggregate(spec, res.runs, res.n_lanes);

    fs::create_directories(c.out_dir);
    {
        auto os = open_out(fs::path(c.out_dir) / "primary.csv");
        qlest::write_primary_csv(os, res);
    }
    {
        auto os = open_out(fs::path(c.out_dir) / "mae.csv");
        qlest::write_mae_csv(os, res.table);
    }
    {
        auto os = open_out(fs::path(c.out_dir) / "cycle_estimates.csv");
        std::vector<std::string> header{"cycle"};
        std::vector<qlest::Estimator> used;
        for (auto e : qlest::kLaneEstimators)
            if (spec.uses(e)) {
                used.push_back(e);
                for (std::size_t i = 0; i < res.n_lanes; ++i)
                    header.push_back(std::string(qlest::name_of(e)) + "_" + qlest::lane_label(i, false));
            }
        qlest::csv::write_row(os, header);
        std::size_t k = 0;
        for (const auto& cyc : trace.cycles) {
            if (cyc.excluded())
                continue;
            std::vector<std::string> row{qlest::csv::format(cyc.cycle_index)};
            for (auto e : used)
                for (double x : rep.per_cycle.at(k).at(e))
                    row.push_back(qlest::csv::format(x));
            qlest::csv::write_row(os, row);
            ++k;
        }
    }
    std::cout << "p_hat " << qlest::csv::format(rep.p_hat) << ", lambda_hat " << qlest::csv::format(rep.lambda_hat)
              << ", params " << qlest::name_of(rep.params) << '\n';
    return 0;
}

int run_experiment(const Common& c, const std::vector<double>& p_grid, std::optional<std::size_t> replications,
                   std::optional<double> horizon, bool oracle, std::size_t threads,
                   const std::vector<std::string>& estimators)
{
    auto spec = load(c);
    if (!p_grid.empty())
        spec.p_grid = p_grid;
    if (replications)
        spec.replications = *replications;
    if (horizon)
        spec.horizon_s = *horizon;
    if (oracle)
        spec.oracle_params = true;
    if (!estimators.empty()) {
        spec.estimators.clear();
        for (const auto& e : estimators)
            spec.estimators.insert(qlest::estimator_from_name(e));
    }
    try {
        spec.validate();
    }
    catch (const qlest::Error& e) {
        throw qlest::Error(qlest::ErrorCode::ValidationError, e.what());
    }

    const auto res = qlest::run_experiment(spec, {threads, false});
    for (const auto& path : qlest::write_experiment_outputs(res, c.out_dir))
        std::cout << path.string() << '\n';
    return 0;
}

int run_assignment(const Common& c)
{
    auto spec = load(c);
    const auto r = qlest::solve_assignment_detailed(spec.scenario.topology, spec.scenario.rho);
    std::vector<std::string> header{"lane"};
    for (std::size_t j = 0; j < r.w.n_roads(); ++j)
        header.push_back("road_" + std::to_string(j + 1));
    header.emplace_back("row_sum");
    qlest::csv::write_row(std::cout, header);
    for (std::size_t i = 0; i < r.w.n_lanes(); ++i) {
        std::vector<std::string> row{qlest::lane_label(i)};
        for (std::size_t j = 0; j < r.w.n_roads(); ++j)
            row.push_back(qlest::csv::format(r.w(i, j)));
        row.push_back(qlest::csv::format(r.w.row_sum(i)));
        qlest::csv::write_row(std::cout, row);
    }
    std::cerr << "objective " << qlest::csv::format(r.objective) << ", kkt residual "
              << qlest::csv::format(r.kkt_residual) << ", iterations " << r.iterations << '\n';
    return 0;
}

bool is_config_error(qlest::ErrorCode code)
{
    using qlest::ErrorCode;
    return code == ErrorCode::ParseError || code == ErrorCode::ValidationError || code == ErrorCode::InvalidRatios ||
           code == ErrorCode::InfeasibleTopology;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Queue length estimation at signalized junctions from probe vehicle data"};
    app.require_subcommand(1);

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "Scenario configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "Master seed, overrides the configuration");
        sub->add_option("--out-dir", common.out_dir, "Output directory");
    };

    std::optional<double> p;
    auto* simulate = app.add_subcommand("simulate", "Simulate one run and dump its trace");
    add_common(simulate);
    simulate->add_option("--p", p, "Penetration ratio, overrides the configuration");

    std::string trace_dir;
    bool oracle = false;
    auto* estimate = app.add_subcommand("estimate", "Run every estimator on a trace dump");
    add_common(estimate);
    estimate->add_option("--trace-dir", trace_dir, "Directory holding trace_*.csv")->required();
    estimate->add_option("--p", p, "True penetration ratio of the trace");
    estimate->add_flag("--oracle-params", oracle, "Evaluate the conditional laws with the true parameters");

    std::vector<double> p_grid;
    std::optional<std::size_t> replications;
    std::optional<double> horizon;
    std::size_t threads = 0;
    std::vector<std::string> estimators;
    auto* experiment = app.add_subcommand("experiment", "Replicated MAE experiment over a penetration grid");
    add_common(experiment);
    experiment->add_option("--p-grid", p_grid, "Penetration ratios")->delimiter(',');
    experiment->add_option("--replications", replications, "Replications per grid point");
    experiment->add_option("--horizon", horizon, "Simulated seconds per replication");
    experiment->add_option("--threads", threads, "Worker threads, 0 for all cores");
    experiment->add_option("--estimators", estimators, "Subset of estimators")->delimiter(',');
    experiment->add_flag("--oracle-params", oracle, "Evaluate the conditional laws with the true parameters");

    auto* assignment = app.add_subcommand("assignment", "Print the lane assignment matrix");
    add_common(assignment);

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfigError;
    }

    try {
        if (*simulate)
            return run_simulate(common, p);
        if (*estimate)
            return run_estimate(common, trace_dir, oracle, p);
        if (*experiment)
            return run_experiment(common, p_grid, replications, horizon, oracle, threads, estimators);
        return run_assignment(common);
    }
    catch (const qlest::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return is_config_error(e.code()) ? kConfigError : kRuntimeError;
    }
    catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}

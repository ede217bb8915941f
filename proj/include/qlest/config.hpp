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
#include "qlest/csv.hpp"
#include "qlest/error.hpp"
#include "qlest/simulation.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace qlest {

/// Everything the harness can evaluate.
enum class Estimator { MBaseline, Prop1, Prop2, Prop3, E0, E1, PHat, LambdaHat };

inline constexpr std::string_view name_of(Estimator e)
{
    switch (e) {
    case Estimator::MBaseline: return "m-baseline";
    case Estimator::Prop1: return "prop1";
    case Estimator::Prop2: return "prop2";
    case Estimator::Prop3: return "prop3";
    case Estimator::E0: return "E0";
    case Estimator::E1: return "E1";
    case Estimator::PHat: return "p-hat";
    case Estimator::LambdaHat: return "lambda-hat";
    }
    return "?";
}

inline Estimator estimator_from_name(std::string_view s)
{
    for (auto e : {Estimator::MBaseline, Estimator::Prop1, Estimator::Prop2, Estimator::Prop3, Estimator::E0,
                   Estimator::E1, Estimator::PHat, Estimator::LambdaHat})
        if (name_of(e) == s)
            return e;
    throw Error(ErrorCode::ParseError, "unknown estimator '" + std::string(s) + "'");
}

inline const std::set<Estimator>& all_estimators()
{
    static const std::set<Estimator> all{Estimator::MBaseline, Estimator::Prop1, Estimator::Prop2, Estimator::Prop3,
                                         Estimator::E0,        Estimator::E1,    Estimator::PHat,  Estimator::LambdaHat};
    return all;
}

struct ExperimentSpec {
    /// Template; p, seed and horizon are overridden per replication.
    ScenarioConfig scenario;
    std::vector<double> p_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::size_t replications = 1;
    double horizon_s = 9000.0;
    std::set<Estimator> estimators = all_estimators();
    /// Evaluate the conditional laws with the true p, lambda and W.
    bool oracle_params = false;
    /// Non-fatal findings, such as an oversaturated scenario.
    std::vector<std::string> warnings;

    bool uses(Estimator e) const { return estimators.contains(e); }

    void validate() const
    {
        try {
            scenario.validate();
            (void)solve_assignment(scenario.topology, scenario.rho);
        }
        catch (const Error& e) {
            if (e.code() == ErrorCode::ValidationError)
                throw;
            throw Error(ErrorCode::ValidationError, e.what());
        }
        if (p_grid.empty())
            throw Error(ErrorCode::ValidationError, "p_grid must not be empty");
        for (double p : p_grid)
            if (!(p > 0.0 && p <= 1.0))
                throw Error(ErrorCode::ValidationError, "p_grid values must lie in (0,1]");
        if (replications < 1)
            throw Error(ErrorCode::ValidationError, "replications must be >= 1");
        if (!(horizon_s > 0.0))
            throw Error(ErrorCode::ValidationError, "horizon must be > 0");
    }
};

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

struct Entry {
    std::string value;
    std::size_t line = 0;
};

[[noreturn]] inline void parse_fail(const std::string& source, std::size_t line, const std::string& key,
                                    const std::string& msg)
{
    throw Error(ErrorCode::ParseError, source + ":" + std::to_string(line) + ": " + key + ": " + msg);
}

template <class F>
auto field(const std::string& source, const std::string& key, const Entry& e, F&& parse)
{
    try {
        return parse(e.value);
    }
    catch (const Error& err) {
        parse_fail(source, e.line, key, err.what());
    }
}

inline std::vector<std::string> list(const std::string& v)
{
    std::vector<std::string> out;
    for (auto& item : csv::split(v))
        if (auto t = trim(item); !t.empty())
            out.push_back(t);
    return out;
}

inline std::vector<double> doubles(const std::string& v)
{
    std::vector<double> out;
    for (auto& s : list(v))
        out.push_back(csv::parse_double(s));
    return out;
}

inline bool boolean(const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes")
        return true;
    if (v == "false" || v == "0" || v == "no")
        return false;
    throw Error(ErrorCode::ParseError, "expected true or false, got '" + v + "'");
}

inline std::size_t one_based(const std::string& s)
{
    const auto x = csv::parse_unsigned(trim(s));
    if (x == 0)
        throw Error(ErrorCode::ParseError, "indices are 1-based");
    return static_cast<std::size_t>(x - 1);
}

} // namespace detail

/// Parses the key = value configuration format:
///
///   # comment
///   [scenario]
///   turn_ratios = 0.1, 0.8, 0.1
///   forbidden = 2:1, 3:1, 1:3, 2:3     (lane:road, 1-based)
///
/// Sections: [scenario], [signal], [experiment]. Unknown sections or keys
/// are parse errors; invariant violations are validation errors.
inline ExperimentSpec parse_config(std::istream& in, const std::string& source = "<config>")
{
    using detail::Entry;
    static const std::map<std::string, std::set<std::string>> known{
        {"scenario",
         {"name", "lanes", "roads", "forbidden", "nominal_lanes", "turn_ratios", "arrival_rate", "penetration",
          "saturation_rate", "green_arrivals"}},
        {"signal", {"red", "green"}},
        {"experiment", {"horizon", "seed", "replications", "p_grid", "estimators", "oracle_params"}},
    };

    std::map<std::string, Entry> entries; // "section.key"
    std::string section;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        const auto t = detail::trim(line);
        if (t.empty())
            continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                detail::parse_fail(source, lineno, t, "unterminated section header");
            section = detail::trim(std::string_view(t).substr(1, t.size() - 2));
            if (!known.contains(section))
                detail::parse_fail(source, lineno, section, "unknown section");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            detail::parse_fail(source, lineno, t, "expected key = value");
        const auto key = detail::trim(std::string_view(t).substr(0, eq));
        const auto value = detail::trim(std::string_view(t).substr(eq + 1));
        if (section.empty())
            detail::parse_fail(source, lineno, key, "key outside of a section");
        if (!known.at(section).contains(key))
            detail::parse_fail(source, lineno, key, "unknown key in [" + section + "]");
        const auto full = section + "." + key;
        if (entries.contains(full))
            detail::parse_fail(source, lineno, key, "duplicate key");
        entries[full] = Entry{value, lineno};
    }

    auto get = [&](const std::string& k) -> const Entry* {
        auto it = entries.find(k);
        return it == entries.end() ? nullptr : &it->second;
    };
    auto require = [&](const std::string& k) -> const Entry& {
        if (auto e = get(k))
            return *e;
        throw Error(ErrorCode::ValidationError, source + ": missing required key " + k);
    };
    auto number = [&](const std::string& k, double fallback) {
        const auto* e = get(k);
        return e ? detail::field(source, k, *e, [](const std::string& v) { return csv::parse_double(v); }) : fallback;
    };
    auto count = [&](const std::string& k, std::size_t fallback) {
        const auto* e = get(k);
        return e ? static_cast<std::size_t>(
                       detail::field(source, k, *e, [](const std::string& v) { return csv::parse_unsigned(v); }))
                 : fallback;
    };

    ExperimentSpec spec;
    auto& sc = spec.scenario;
    if (const auto* e = get("scenario.name"))
        sc.name = e->value;

    sc.topology = JunctionTopology{};
    sc.topology.n_lanes = count("scenario.lanes", 3);
    sc.topology.n_roads = count("scenario.roads", 3);
    if (const auto* e = get("scenario.forbidden"))
        sc.topology.forbidden = detail::field(source, "forbidden", *e, [](const std::string& v) {
            std::vector<std::pair<std::size_t, std::size_t>> out;
            for (auto& item : detail::list(v)) {
                const auto parts = csv::split(item, ':');
                if (parts.size() != 2)
                    throw Error(ErrorCode::ParseError, "expected lane:road, got '" + item + "'");
                out.emplace_back(detail::one_based(parts[0]), detail::one_based(parts[1]));
            }
            return out;
        });
    if (const auto* e = get("scenario.nominal_lanes"))
        sc.topology.nominal_lane = detail::field(source, "nominal_lanes", *e, [](const std::string& v) {
            std::vector<std::size_t> out;
            for (auto& item : detail::list(v))
                out.push_back(detail::one_based(item));
            return out;
        });

    sc.rho.rho = detail::field(source, "turn_ratios", require("scenario.turn_ratios"), detail::doubles);
    sc.lambda = detail::field(source, "arrival_rate", require("scenario.arrival_rate"),
                              [](const std::string& v) { return csv::parse_double(v); });
    sc.p = number("scenario.penetration", 0.5);
    sc.q_sat = number("scenario.saturation_rate", 1.0);
    if (const auto* e = get("scenario.green_arrivals"))
        sc.green_arrivals = detail::field(source, "green_arrivals", *e, detail::boolean);
    sc.timing.red_s = number("signal.red", 60.0);
    sc.timing.green_s = number("signal.green", 60.0);

    spec.horizon_s = number("experiment.horizon", 9000.0);
    sc.horizon_s = spec.horizon_s;
    if (const auto* e = get("experiment.seed"))
        sc.seed = detail::field(source, "seed", *e, [](const std::string& v) { return csv::parse_unsigned(v); });
    spec.replications = count("experiment.replications", 1);
    if (const auto* e = get("experiment.p_grid"))
        spec.p_grid = detail::field(source, "p_grid", *e, detail::doubles);
    if (const auto* e = get("experiment.estimators"))
        spec.estimators = detail::field(source, "estimators", *e, [](const std::string& v) {
            std::set<Estimator> out;
            for (auto& s : detail::list(v))
                out.insert(estimator_from_name(s));
            return out;
        });
    if (const auto* e = get("experiment.oracle_params"))
        spec.oracle_params = detail::field(source, "oracle_params", *e, detail::boolean);

    spec.validate();
    const auto w = solve_assignment(sc.topology, sc.rho);
    if (!sc.undersaturated(w))
        spec.warnings.push_back("scenario '" + sc.name +
                                "' violates lambda * cycle * max_i w_i < q_sat * green; expect overflow cycles");
    return spec;
}

inline ExperimentSpec load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::IoError, "cannot open config file " + path);
    return parse_config(in, path);
}

} // namespace qlest

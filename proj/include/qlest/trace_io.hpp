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

#include "qlest/csv.hpp"
#include "qlest/error.hpp"
#include "qlest/simulation.hpp"

#include <cstddef>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace qlest {

/// Column label of a lane: A, B, C, ...
inline std::string lane_label(std::size_t lane, bool upper = true)
{
    if (lane >= 26)
        return (upper ? "L" : "l") + std::to_string(lane + 1);
    return std::string(1, static_cast<char>((upper ? 'A' : 'a') + lane));
}

/// One row per cycle: cycle, A, B, C, A_p, B_p, C_p, m, x_p, overflow, then
/// last_probe_lane (1-based, 0 if none), probe_arrivals_red, carried_over.
inline void write_trace_cycles(std::ostream& os, const SimTrace& trace)
{
    const std::size_t n = trace.config.topology.n_lanes;
    std::vector<std::string> header{"cycle"};
    for (std::size_t i = 0; i < n; ++i)
        header.push_back(lane_label(i));
    for (std::size_t i = 0; i < n; ++i)
        header.push_back(lane_label(i) + "_p");
    for (const char* h : {"m", "x_p", "overflow", "last_probe_lane", "probe_arrivals_red", "carried_over"})
        header.emplace_back(h);
    csv::write_row(os, header);
    for (const auto& c : trace.cycles) {
        std::vector<std::string> row{csv::format(c.cycle_index)};
        for (auto q : c.true_queues)
            row.push_back(csv::format(q));
        for (auto q : c.probe_queues)
            row.push_back(csv::format(q));
        row.push_back(csv::format(c.m));
        row.push_back(csv::format(c.x_p));
        row.push_back(c.overflow ? "1" : "0");
        row.push_back(csv::format(c.last_probe_lane ? *c.last_probe_lane + 1 : std::size_t{0}));
        row.push_back(csv::format(c.probe_arrivals_in_red));
        row.push_back(c.carried_over ? "1" : "0");
        csv::write_row(os, row);
    }
}

/// One row per probe exit: cycle, probe_id, dest (1-based), t_e, queued.
inline void write_trace_exits(std::ostream& os, const SimTrace& trace)
{
    csv::write_row(os, {"cycle", "probe_id", "dest", "t_e", "queued"});
    for (const auto& c : trace.cycles)
        for (const auto& e : c.probe_exits)
            csv::write_row(os, {csv::format(c.cycle_index), std::to_string(e.id), csv::format(e.road + 1),
                                csv::format_seconds(e.t_e), e.queued ? "1" : "0"});
}

/// One row per probe queued at the end of red: cycle, probe_id, lane, dest,
/// position, arrival_s (relative to red start).
inline void write_trace_probes(std::ostream& os, const SimTrace& trace)
{
    csv::write_row(os, {"cycle", "probe_id", "lane", "dest", "position", "arrival_s"});
    for (const auto& c : trace.cycles)
        for (const auto& q : c.queued_probes)
            csv::write_row(os, {csv::format(c.cycle_index), std::to_string(q.id), csv::format(q.lane + 1),
                                csv::format(q.road + 1), csv::format(q.position), csv::format_seconds(q.arrival_s)});
}

namespace detail {

inline std::size_t cell_count(const csv::Table& t, const std::vector<std::string>& row, std::string_view col)
{
    return static_cast<std::size_t>(csv::parse_unsigned(row[t.column(col)]));
}

inline std::size_t one_based_cell(const csv::Table& t, const std::vector<std::string>& row, std::string_view col)
{
    const auto v = cell_count(t, row, col);
    if (v == 0)
        throw Error(ErrorCode::ParseError, std::string(col) + " is 1-based");
    return v - 1;
}

} // namespace detail

/// Rebuilds the observations of a trace dump. `probes` may be null; the
/// per-probe records are only needed by the n-lane windows.
inline std::vector<CycleObservation> read_trace(std::istream& cycles_in, std::istream& exits_in,
                                                std::istream* probes_in, std::size_t n_lanes)
{
    const auto ct = csv::read(cycles_in);
    std::vector<CycleObservation> cycles;
    std::map<std::size_t, std::size_t> by_index;
    for (const auto& row : ct.rows) {
        CycleObservation c;
        c.cycle_index = detail::cell_count(ct, row, "cycle");
        for (std::size_t i = 0; i < n_lanes; ++i) {
            c.true_queues.push_back(detail::cell_count(ct, row, lane_label(i)));
            c.probe_queues.push_back(detail::cell_count(ct, row, lane_label(i) + "_p"));
        }
        c.m = detail::cell_count(ct, row, "m");
        c.x_p = detail::cell_count(ct, row, "x_p");
        c.overflow = detail::cell_count(ct, row, "overflow") != 0;
        if (const auto l = detail::cell_count(ct, row, "last_probe_lane"); l > 0)
            c.last_probe_lane = l - 1;
        c.probe_arrivals_in_red = detail::cell_count(ct, row, "probe_arrivals_red");
        c.carried_over = detail::cell_count(ct, row, "carried_over") != 0;
        by_index[c.cycle_index] = cycles.size();
        cycles.push_back(std::move(c));
    }
    auto cycle_of = [&](std::size_t idx) -> CycleObservation& {
        auto it = by_index.find(idx);
        if (it == by_index.end())
            throw Error(ErrorCode::ParseError, "record refers to unknown cycle " + std::to_string(idx));
        return cycles[it->second];
    };

    const auto et = csv::read(exits_in);
    for (const auto& row : et.rows) {
        ProbeExit e;
        e.id = csv::parse_unsigned(row[et.column("probe_id")]);
        e.road = detail::one_based_cell(et, row, "dest");
        e.t_e = csv::parse_double(row[et.column("t_e")]);
        e.queued = detail::cell_count(et, row, "queued") != 0;
        cycle_of(detail::cell_count(et, row, "cycle")).probe_exits.push_back(e);
    }

    if (probes_in) {
        const auto pt = csv::read(*probes_in);
        for (const auto& row : pt.rows) {
            QueuedProbe q;
            q.id = csv::parse_unsigned(row[pt.column("probe_id")]);
            q.lane = detail::one_based_cell(pt, row, "lane");
            q.road = detail::one_based_cell(pt, row, "dest");
            q.position = detail::cell_count(pt, row, "position");
            q.arrival_s = csv::parse_double(row[pt.column("arrival_s")]);
            cycle_of(detail::cell_count(pt, row, "cycle")).queued_probes.push_back(q);
        }
    }
    return cycles;
}

} // namespace qlest

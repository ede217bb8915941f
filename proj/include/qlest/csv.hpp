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

#include <charconv>
#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace qlest::csv {

/// Shortest decimal form that parses back to the same double.
inline std::string format(double x)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc{})
        throw Error(ErrorCode::InvalidArgument, "unformattable number");
    return {buf, end};
}

inline std::string format(std::size_t x) { return std::to_string(x); }

/// Times are written with exactly three decimals.
inline std::string format_seconds(double x)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed, 3);
    if (ec != std::errc{})
        throw Error(ErrorCode::InvalidArgument, "unformattable time");
    return {buf, end};
}

inline double parse_double(std::string_view s)
{
    double x = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw Error(ErrorCode::ParseError, "not a number: '" + std::string(s) + "'");
    return x;
}

inline unsigned long long parse_unsigned(std::string_view s)
{
    unsigned long long x = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw Error(ErrorCode::ParseError, "not a nonnegative integer: '" + std::string(s) + "'");
    return x;
}

/// Comma-joined row terminated by LF. Fields never contain commas.
inline void write_row(std::ostream& os, const std::vector<std::string>& fields)
{
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i)
            os << ',';
        os << fields[i];
    }
    os << '\n';
}

inline std::vector<std::string> split(std::string_view line, char sep = ',')
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name)
                return i;
        throw Error(ErrorCode::ParseError, "missing column '" + std::string(name) + "'");
    }
};

inline Table read(std::istream& is)
{
    Table t;
    std::string line;
    if (!std::getline(is, line))
        throw Error(ErrorCode::ParseError, "empty CSV input");
    t.header = split(line);
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        auto row = split(line);
        if (row.size() != t.header.size())
            throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected " +
                                                   std::to_string(t.header.size()) + " fields");
        t.rows.push_back(std::move(row));
    }
    return t;
}

} // namespace qlest::csv

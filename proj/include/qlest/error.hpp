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

#include <stdexcept>
#include <string>
#include <string_view>

namespace qlest {

enum class ErrorCode {
    InvalidArgument,
    InfeasibleTopology,
    InvalidRatios,
    NegativeRate,
    SolverFailure,
    NoProbeExits,
    ZeroPenetration,
    ZeroColumn,
    DegenerateObservation,
    InconsistentObservation,
    TooFewLanes,
    MissingWindow,
    ParseError,
    ValidationError,
    LengthMismatch,
    Empty,
    IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InfeasibleTopology: return "InfeasibleTopology";
    case ErrorCode::InvalidRatios: return "InvalidRatios";
    case ErrorCode::NegativeRate: return "NegativeRate";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::NoProbeExits: return "NoProbeExits";
    case ErrorCode::ZeroPenetration: return "ZeroPenetration";
    case ErrorCode::ZeroColumn: return "ZeroColumn";
    case ErrorCode::DegenerateObservation: return "DegenerateObservation";
    case ErrorCode::InconsistentObservation: return "InconsistentObservation";
    case ErrorCode::TooFewLanes: return "TooFewLanes";
    case ErrorCode::MissingWindow: return "MissingWindow";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what)
        , code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace qlest

// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "demoalign/error.h"

namespace demoalign {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::LengthExceeded: return "LengthExceeded";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EnumerationTooLarge: return "EnumerationTooLarge";
    case ErrorCode::SupportMismatch: return "SupportMismatch";
    case ErrorCode::OrderingViolation: return "OrderingViolation";
    case ErrorCode::IterationOrderViolation: return "IterationOrderViolation";
    case ErrorCode::EmptyStore: return "EmptyStore";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::DegenerateRewards: return "DegenerateRewards";
    case ErrorCode::JudgeUnavailable: return "JudgeUnavailable";
    case ErrorCode::MalformedJudgment: return "MalformedJudgment";
    case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace demoalign

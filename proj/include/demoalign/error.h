// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace demoalign {

enum class ErrorCode {
    ParseError,
    UnknownToken,
    EmptyFile,
    IoError,
    VersionMismatch,
    LengthExceeded,
    InvalidArgument,
    EnumerationTooLarge,
    SupportMismatch,
    OrderingViolation,
    IterationOrderViolation,
    EmptyStore,
    NonFiniteLoss,
    NonFiniteGradient,
    DegenerateRewards,
    JudgeUnavailable,
    MalformedJudgment,
    ConfigError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }
    /// The message without the code prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace demoalign

// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// AdamW with warmup learning-rate schedules.

#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "demoalign/policy.h"

namespace demoalign {

enum class ScheduleKind { Constant, ConstantWithWarmup, Cosine };

std::string_view to_string(ScheduleKind kind);
ScheduleKind schedule_from_string(std::string_view name);

struct Schedule {
    ScheduleKind kind = ScheduleKind::Constant;
    double warmup_ratio = 0.0;
    std::size_t total_steps = 1;

    std::size_t warmup_steps() const;
    /// Multiplier on the base learning rate for 0-based update `step`.
    double factor(std::size_t step) const;
};

struct AdamWConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

class AdamW {
public:
    AdamW(const ParameterVector& params, AdamWConfig config, Schedule schedule);

    /// One update. Throws InvalidArgument if the layout changed and
    /// NonFiniteGradient if `grad` has a NaN or infinity.
    void step(ParameterVector& params, std::span<const double> grad);

    std::size_t step_count() const noexcept { return step_; }
    double current_learning_rate() const { return config_.learning_rate * schedule_.factor(step_); }
    const AdamWConfig& config() const noexcept { return config_; }
    const Schedule& schedule() const noexcept { return schedule_; }

private:
    AdamWConfig config_;
    Schedule schedule_;
    std::vector<ParameterBlock> layout_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::size_t step_ = 0;
};

}  // namespace demoalign

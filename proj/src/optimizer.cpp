// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "demoalign/optimizer.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "demoalign/error.h"

namespace demoalign {

std::string_view to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::Constant: return "constant";
        case ScheduleKind::ConstantWithWarmup: return "constant_with_warmup";
        case ScheduleKind::Cosine: return "cosine";
    }
    return "unknown";
}

ScheduleKind schedule_from_string(std::string_view name) {
    for (auto kind : {ScheduleKind::Constant, ScheduleKind::ConstantWithWarmup, ScheduleKind::Cosine}) {
        if (to_string(kind) == name) {
            return kind;
        }
    }
    fail(ErrorCode::ConfigError, "unknown schedule '" + std::string(name) + "'");
}

std::size_t Schedule::warmup_steps() const {
    if (kind == ScheduleKind::Constant) {
        return 0;
    }
    return static_cast<std::size_t>(std::ceil(warmup_ratio * static_cast<double>(total_steps)));
}

double Schedule::factor(std::size_t step) const {
    const std::size_t warmup = warmup_steps();
    if (step < warmup) {
        return static_cast<double>(step + 1) / static_cast<double>(warmup);
    }
    if (kind != ScheduleKind::Cosine) {
        return 1.0;
    }
    const std::size_t decay = std::max<std::size_t>(1, total_steps - std::min(total_steps, warmup));
    const double progress = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(decay));
    return 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(const ParameterVector& params, AdamWConfig config, Schedule schedule)
    : config_(config), schedule_(schedule), layout_(params.layout()), m_(params.size(), 0.0),
      v_(params.size(), 0.0) {
    if (!(config_.learning_rate >= 0.0) || !(config_.beta1 >= 0.0 && config_.beta1 < 1.0) ||
        !(config_.beta2 >= 0.0 && config_.beta2 < 1.0) || !(config_.epsilon > 0.0)) {
        fail(ErrorCode::InvalidArgument, "invalid AdamW hyperparameters");
    }
}

void AdamW::step(ParameterVector& params, std::span<const double> grad) {
    if (params.layout() != layout_ || grad.size() != m_.size()) {
        fail(ErrorCode::InvalidArgument, "optimizer state does not match the parameter layout");
    }
    for (double g : grad) {
        if (!std::isfinite(g)) {
            fail(ErrorCode::NonFiniteGradient, "gradient has a non-finite entry at update " +
                                                   std::to_string(step_));
        }
    }
    const double lr = current_learning_rate();
    ++step_;
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    auto& theta = params.values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
        m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
        v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
        const double m_hat = m_[i] / c1;
        const double v_hat = v_[i] / c2;
        theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + config_.epsilon) + config_.weight_decay * theta[i]);
    }
}

}  // namespace demoalign

// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Head-to-head win rates between policies, judges, and a reward-labelled
// pair generator.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "demoalign/core.h"
#include "demoalign/policy.h"

namespace demoalign {

enum class Verdict { A, B, Tie };
enum class JudgeKind { GroundTruthReward, ExternalLLM };

std::string_view to_string(Verdict verdict);
std::string_view to_string(JudgeKind kind);

class Judge {
public:
    virtual ~Judge() = default;
    virtual JudgeKind kind() const = 0;
    /// Which candidate better matches the prompt's expert. Must be safe to
    /// call concurrently.
    virtual Verdict prefer(const Prompt& x, const Completion& a, const Completion& b) const = 0;
};

/// Higher true reward wins; equal rewards tie.
class RewardJudge final : public Judge {
public:
    explicit RewardJudge(RewardFn reward);
    JudgeKind kind() const override { return JudgeKind::GroundTruthReward; }
    Verdict prefer(const Prompt& x, const Completion& a, const Completion& b) const override;

private:
    RewardFn reward_;
};

struct PromptWinRate {
    int prompt_id = 0;
    std::size_t pairs = 0;
    double win_rate = 0.0;
};

struct WinRateResult {
    double win_rate = 0.0;
    /// Sum of per-pair scores (1 win, 0.5 split, 0 loss).
    double wins = 0.0;
    std::size_t pairs = 0;
    std::size_t judge_calls = 0;
    /// Across prompts, or across pairs when there is a single prompt.
    double sem = 0.0;
    std::vector<PromptWinRate> per_prompt;
};

struct HeadToHeadOptions {
    std::size_t samples_per_prompt = 3;
    bool order_swap = true;
    double temperature = 1.0;
    std::uint64_t seed = 0;
};

/// Win rate of `a` over `b` on every prompt of `task`. Each policy samples
/// from a stream keyed by (seed, its parameter fingerprint, prompt id), so
/// swapping a and b yields exactly 1 - result with a deterministic judge.
WinRateResult head_to_head(const Policy& a, const Policy& b, const TaskSpec& task, const Judge& judge,
                           const HeadToHeadOptions& options = {});

/// Pairs sampled from `policy` and labelled by `reward`; tied draws are
/// redrawn. Throws DegenerateRewards when more than 90% of draws tie.
std::vector<ComparisonTriple> synth_annotate(const Policy& policy, const TaskSpec& task, const RewardFn& reward,
                                             std::size_t n_pairs, Rng& rng, int iteration = 0);

struct WinRateRow {
    std::string policy_a;
    std::string policy_b;
    std::string judge;
    WinRateResult result;
};

/// Columns: policy_a, policy_b, judge, prompts, pairs, win_rate, sem.
void write_win_rate_csv(const std::filesystem::path& path, const std::vector<WinRateRow>& rows);

}  // namespace demoalign

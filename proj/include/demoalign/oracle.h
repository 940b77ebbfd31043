// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exact enumeration oracles for the KL-regularized reward objective
//   J(pi) = E_{x~p} E_{y~pi}[ r(x,y) - alpha * log(pi(y|x) / pi_ref(y|x)) ]
// and its maximizer pi*(y|x) = pi_ref(y|x) exp(r(x,y)/alpha) / Z(x).

#pragma once

#include <filesystem>
#include <map>
#include <span>

#include "demoalign/core.h"
#include "demoalign/policy.h"
#include "demoalign/tabular_policy.h"

namespace demoalign {

/// Ground-truth reward together with the KL coefficient alpha (> 0).
class RewardTable {
public:
    RewardTable(RewardFn reward, double alpha);

    struct Entry {
        int prompt_id = 0;
        TokenSeq completion;
        double reward = 0.0;
    };

    /// Explicit table; looking up a missing (prompt, completion) throws InvalidArgument.
    static RewardTable from_entries(const std::vector<Entry>& entries, double alpha);
    /// JSON: {"alpha": a, "entries": [{"prompt_id": i, "completion": [tokens], "reward": r}, ...]}
    static RewardTable load(const std::filesystem::path& path, const Vocabulary& vocabulary);

    double operator()(const Prompt& x, const Completion& y) const;
    double alpha() const noexcept { return alpha_; }
    const RewardFn& function() const noexcept { return reward_; }

private:
    RewardFn reward_;
    double alpha_;
};

std::size_t edit_distance(const TokenSeq& a, const TokenSeq& b);

/// Fraction of positions where y agrees with the prompt's target
/// (normalized by the longer of the two lengths).
RewardFn pattern_match_reward(std::map<int, TokenSeq> targets);
/// 1 - levenshtein(y, target) / max(|y|, |target|).
RewardFn edit_distance_reward(std::map<int, TokenSeq> targets);

struct PromptOptimum {
    int prompt_id = 0;
    double log_partition = 0.0;  ///< log Z(x)
    double value = 0.0;          ///< V*(x) = alpha * log Z(x)
    std::vector<Completion> completions;
    std::vector<double> probabilities;
};

struct SoftOptimum {
    double alpha = 1.0;
    std::vector<PromptOptimum> prompts;
    /// pi* as a policy over the reference support of each prompt.
    std::shared_ptr<const TabularPolicy> policy;

    const PromptOptimum& at(int prompt_id) const;
    /// E_{x~p}[V*(x)] == J(pi*).
    double expected_value(const TaskSpec& task) const;
};

SoftOptimum soft_optimum(const Policy& ref, const TaskSpec& task, const RewardTable& reward,
                         std::size_t cap = kDefaultEnumerationCap);

/// Exact J(pi) by enumeration; zero-probability completions contribute nothing.
double j_kl(const Policy& policy, const Policy& ref, const RewardFn& reward, double alpha,
            const TaskSpec& task, std::size_t cap = kDefaultEnumerationCap);

/// KL(a(.|x) || b(.|x)); throws SupportMismatch where a has mass and b does not.
double kl(const Policy& a, const Policy& b, const Prompt& x, std::size_t cap = kDefaultEnumerationCap);

/// E_{x~p}[KL(a || b)].
double expected_kl(const Policy& a, const Policy& b, const TaskSpec& task,
                   std::size_t cap = kDefaultEnumerationCap);

double expected_reward(const Policy& policy, const RewardFn& reward, const TaskSpec& task,
                       std::size_t cap = kDefaultEnumerationCap);
/// Empirical mean of r over a demonstration set.
double expected_reward(std::span<const Demonstration> demos, const RewardFn& reward);

/// Largest total-variation distance between two policies over the task prompts.
double max_total_variation(const Policy& a, const Policy& b, const TaskSpec& task,
                           std::size_t cap = kDefaultEnumerationCap);

}  // namespace demoalign

// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic tasks with a known reward: a tabular bandit with a noisy expert,
// and a sequence-rewriting task for the autoregressive policy.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "demoalign/autoregressive_policy.h"
#include "demoalign/core.h"
#include "demoalign/oracle.h"
#include "demoalign/policy.h"

namespace demoalign {

struct SyntheticTask {
    /// Prompts the demonstrations come from.
    TaskSpec train;
    /// Prompts used for evaluation (equal to `train` for the bandit).
    TaskSpec test;
    std::vector<Demonstration> demos;
    std::shared_ptr<const Policy> reference;
    std::optional<RewardTable> reward;
    /// Reward-maximizing completion per prompt id (train and test).
    std::map<int, TokenSeq> targets;
};

/// One prompt; every completion of exactly `length` tokens is an arm. The
/// expert emits token 0 at every position and flips each token to a uniformly
/// chosen other token with probability `epsilon`. Reward is the fraction of
/// positions that match the expert's target. Reference is uniform.
struct BanditParams {
    int vocab_size = 8;
    int length = 1;
    double epsilon = 0.3;
    std::size_t demos = 5;
    double alpha = 0.05;

    nlohmann::json to_json() const;
    static BanditParams from_json(const nlohmann::json& j);
};

SyntheticTask make_noisy_bandit(const BanditParams& params, std::uint64_t seed);

/// Prompts are random token strings; the user's style rewrites the token
/// aligned with each completion position through a fixed random substitution.
/// The reference model is pretrained to copy the prompt with noise, so it
/// knows the format but not the substitution.
struct SequenceParams {
    int vocab_size = 6;
    int prompt_length = 4;
    int completion_length = 4;
    std::size_t test_prompts = 48;
    /// One demonstration per training prompt.
    std::size_t demos = 4;
    /// Probability that pretraining targets copy the aligned token.
    double copy_probability = 0.5;
    std::size_t pretrain_examples = 512;
    std::size_t pretrain_epochs = 30;
    double pretrain_learning_rate = 0.01;
    int embed_dim = 8;
    int hidden_dim = 32;
    double alpha = 0.05;

    nlohmann::json to_json() const;
    static SequenceParams from_json(const nlohmann::json& j);
};

SyntheticTask make_sequence_task(const SequenceParams& params, std::uint64_t seed);

/// Same task with only the first `n` demonstrations and their prompts.
SyntheticTask with_demo_count(const SyntheticTask& task, std::size_t n);

}  // namespace demoalign

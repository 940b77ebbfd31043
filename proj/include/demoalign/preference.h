// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Ranking over expert data and policy checkpoints, D_E > D_t > ... > D_0,
// and the mixed online / replay / intermodel batch sampler.

#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "demoalign/core.h"
#include "demoalign/policy.h"
#include "demoalign/rng.h"

namespace demoalign {

struct MixtureConfig {
    double frac_online = 0.7;
    double frac_replay = 0.2;
    double frac_intermodel = 0.1;

    /// Throws ConfigError naming the mixture fields when the fractions are
    /// outside [0, 1] or do not sum to 1 within 1e-9.
    void validate() const;
    std::array<double, 3> fractions() const { return {frac_online, frac_replay, frac_intermodel}; }
};

/// Largest-remainder apportionment of `total` items. Ties in the fractional
/// part go to the earlier category.
std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& fractions);

struct SampledCompletion {
    Prompt prompt;
    Completion completion;
};

struct CheckpointDataset {
    int iteration = 0;
    std::vector<SampledCompletion> samples;
    /// Samples whose token sequence equals an expert completion for the same prompt.
    std::size_t expert_duplicates = 0;
};

struct BatchStats {
    std::array<std::size_t, 3> planned{};  ///< online, replay, intermodel after apportionment
    std::array<std::size_t, 3> emitted{};
    std::size_t redraws = 0;
    std::size_t skipped = 0;
};

struct StoreReport {
    struct Violation {
        std::size_t index = 0;
        std::string reason;
    };
    std::vector<Violation> violations;
    std::vector<std::pair<int, std::size_t>> dataset_sizes;  ///< (iteration, samples)
    std::size_t expert_duplicates = 0;
    std::size_t skipped_pairs = 0;
};

class RankingStore {
public:
    explicit RankingStore(std::vector<Demonstration> expert);

    /// Iteration must be the next index (0 for an empty store, else t + 1), or
    /// equal to the current t, in which case samples are appended to D_t.
    void add_checkpoint_dataset(const PolicySnapshot& snapshot, std::vector<SampledCompletion> samples);
    void add_checkpoint_dataset(int iteration, std::vector<SampledCompletion> samples);

    bool empty() const noexcept { return datasets_.empty(); }
    /// Current iteration t; -1 when no checkpoint dataset exists.
    int current_iteration() const noexcept;
    const std::vector<Demonstration>& expert() const noexcept { return expert_; }
    const std::vector<CheckpointDataset>& datasets() const noexcept { return datasets_; }

    /// Read-only; see README for the sampling rules. Throws EmptyStore.
    std::vector<ComparisonTriple> sample_batch(std::size_t batch_size, const MixtureConfig& mixture,
                                               Rng& rng, BatchStats* stats = nullptr) const;

    void note_skipped(std::size_t n) { skipped_ += n; }
    std::size_t skipped() const noexcept { return skipped_; }

private:
    std::vector<Demonstration> expert_;
    std::vector<CheckpointDataset> datasets_;
    std::map<int, std::vector<std::size_t>> expert_by_prompt_;
    /// Per dataset: prompt id -> sample indices.
    std::vector<std::map<int, std::vector<std::size_t>>> by_prompt_;
    std::size_t skipped_ = 0;
};

/// Checks every triple against the ranking and reports dataset sizes and skip counts.
StoreReport validate(const RankingStore& store, std::span<const ComparisonTriple> triples = {});

}  // namespace demoalign

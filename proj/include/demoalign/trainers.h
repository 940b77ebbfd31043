// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Supervised fine-tuning, the DPO update against a frozen reference, the
// iterative demonstration-ranking loop and a fixed-pair DPO baseline.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "demoalign/core.h"
#include "demoalign/optimizer.h"
#include "demoalign/oracle.h"
#include "demoalign/policy.h"
#include "demoalign/preference.h"

namespace demoalign {

struct SftConfig {
    double learning_rate = 3e-5;
    std::size_t batch_size = 4;
    std::size_t max_epochs = 20;
    /// Stop as soon as the loss of the next batch is at or below this value.
    double early_stop_loss = 1.0;
    ScheduleKind schedule = ScheduleKind::Cosine;
    double warmup_ratio = 0.1;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SftResult {
    PolicySnapshot snapshot;
    std::size_t steps = 0;
    /// Mean per-token NLL of all demos before training and after every epoch.
    std::vector<double> epoch_nll;
};

/// Mean over demos of the per-token negative log-likelihood.
double sft_loss(const Policy& policy, std::span<const Demonstration> demos);
/// Returns the loss and writes its gradient into `grad` (resized to the parameter count).
double sft_loss_and_grad(const Policy& policy, std::span<const Demonstration> demos,
                         std::vector<double>& grad);

/// Trains `policy` in place and returns the snapshot tagged t = 0.
SftResult sft_train(Policy& policy, std::span<const Demonstration> demos, const SftConfig& config);

double softplus(double x);

double dpo_loss(const Policy& policy, const PolicySnapshot& reference,
                std::span<const ComparisonTriple> batch, double alpha);
double dpo_loss_and_grad(const Policy& policy, const PolicySnapshot& reference,
                         std::span<const ComparisonTriple> batch, double alpha,
                         std::vector<double>& grad);

/// One AdamW update on the batch loss; returns the loss before the update.
double dpo_step(Policy& policy, const PolicySnapshot& reference, std::span<const ComparisonTriple> batch,
                double alpha, AdamW& optimizer);

enum class ResampleMode {
    /// New checkpoint samples every K gradient steps.
    EveryK,
    /// K sampling rounds spread evenly over the whole step budget.
    KRounds,
};

enum class AblationVariant { Full, SampleAtStart, UpdateReference, NoReplay, NoIntermodel };

inline constexpr AblationVariant kAllVariants[] = {AblationVariant::Full, AblationVariant::SampleAtStart,
                                                   AblationVariant::UpdateReference,
                                                   AblationVariant::NoReplay, AblationVariant::NoIntermodel};

std::string_view to_string(AblationVariant variant);
AblationVariant variant_from_string(std::string_view name);
std::string_view to_string(ResampleMode mode);
ResampleMode resample_mode_from_string(std::string_view name);

struct DittoConfig {
    std::size_t samples_per_demo = 10;      ///< M
    std::size_t resample_every = 10;        ///< K
    std::size_t total_steps = 40;
    std::size_t batch_size = 24;
    double alpha = 0.05;
    double temperature = 1.0;
    double dpo_learning_rate = 1e-6;
    ScheduleKind dpo_schedule = ScheduleKind::ConstantWithWarmup;
    double dpo_warmup_ratio = 0.25;
    double weight_decay = 0.0;
    ResampleMode resample_mode = ResampleMode::EveryK;
    MixtureConfig mixture;
    SftConfig sft;
    /// Steps for the fixed-pair baseline; 0 means total_steps.
    std::size_t pairwise_steps = 0;
    std::uint64_t seed = 0;

    void validate() const;
    /// Gradient steps between sampling rounds.
    std::size_t sampling_interval() const;
};

/// The mixture actually used by a variant.
MixtureConfig variant_mixture(const MixtureConfig& mixture, AblationVariant variant);

struct StepMetrics {
    std::size_t step = 0;
    int iteration = 0;
    /// Empty when every pair of the batch was skipped and no update ran.
    std::optional<double> loss;
    std::optional<double> true_reward;
    std::optional<double> j_kl;
    BatchStats batch;
};

struct RunArtifact {
    AblationVariant variant = AblationVariant::Full;
    SftResult sft;
    /// pi_0 .. pi_T; snapshots[t].iteration() == t.
    std::vector<PolicySnapshot> snapshots;
    std::vector<StepMetrics> metrics;
    /// Reference fingerprint in effect at every step.
    std::vector<std::uint64_t> reference_fingerprints;
    RankingStore store;
    std::size_t skipped_pairs = 0;

    const PolicySnapshot& final_snapshot() const { return snapshots.back(); }
};

struct RunOptions {
    /// Enables true_reward and j_kl metrics (j_kl measured against pi_0).
    const RewardTable* reward = nullptr;
    /// Reuse an already trained pi_0 instead of running SFT.
    std::optional<SftResult> sft;
};

RunArtifact ditto_run(const TaskSpec& task, std::span<const Demonstration> demos, const Policy& ref_policy,
                      const DittoConfig& config, AblationVariant variant, const RunOptions& options = {});

/// Plain DPO on a fixed pair set with `reference` frozen; starts from the reference.
PolicySnapshot pairwise_dpo_baseline(const PolicySnapshot& reference, std::span<const ComparisonTriple> pairs,
                                     const DittoConfig& config);

}  // namespace demoalign

// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "demoalign/trainers.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "demoalign/error.h"

namespace demoalign {

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) {
        fail(ErrorCode::ConfigError, field + " " + what);
    }
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.below(i)]);
    }
}

// log sigma(x), stable for large |x|.
double log_sigmoid(double x) { return -softplus(-x); }

double sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

void SftConfig::validate() const {
    require(learning_rate >= 0.0, "sft.learning_rate", "must be non-negative");
    require(batch_size >= 1, "sft.batch_size", "must be at least 1");
    require(max_epochs >= 1, "sft.max_epochs", "must be at least 1");
    require(warmup_ratio >= 0.0 && warmup_ratio <= 1.0, "sft.warmup_ratio", "must lie in [0, 1]");
    require(weight_decay >= 0.0, "sft.weight_decay", "must be non-negative");
}

double sft_loss(const Policy& policy, std::span<const Demonstration> demos) {
    if (demos.empty()) {
        fail(ErrorCode::InvalidArgument, "sft loss over an empty demo set");
    }
    double total = 0.0;
    for (const auto& d : demos) {
        total -= policy.logprob(d.prompt, d.completion) /
                 static_cast<double>(policy.prediction_count(d.completion));
    }
    return total / static_cast<double>(demos.size());
}

double sft_loss_and_grad(const Policy& policy, std::span<const Demonstration> demos,
                         std::vector<double>& grad) {
    if (demos.empty()) {
        fail(ErrorCode::InvalidArgument, "sft loss over an empty demo set");
    }
    grad.assign(policy.parameters().size(), 0.0);
    const double n = static_cast<double>(demos.size());
    double total = 0.0;
    for (const auto& d : demos) {
        const double count = static_cast<double>(policy.prediction_count(d.completion));
        total -= policy.accumulate_grad_logprob(d.prompt, d.completion, -1.0 / (n * count), grad) / count;
    }
    return total / n;
}

SftResult sft_train(Policy& policy, std::span<const Demonstration> demos, const SftConfig& config) {
    config.validate();
    if (demos.empty()) {
        fail(ErrorCode::InvalidArgument, "sft_train needs at least one demonstration");
    }
    Rng rng(mix_seed(config.seed, 0x5f7));
    const std::size_t per_epoch = (demos.size() + config.batch_size - 1) / config.batch_size;
    AdamW optimizer(policy.parameters(),
                    AdamWConfig{config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay},
                    Schedule{config.schedule, config.warmup_ratio, per_epoch * config.max_epochs});

    std::vector<double> epoch_nll{sft_loss(policy, demos)};
    std::vector<std::size_t> order(demos.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Demonstration> batch;
    std::vector<double> grad;
    std::size_t steps = 0;
    bool stopped = false;
    for (std::size_t epoch = 0; epoch < config.max_epochs && !stopped; ++epoch) {
        shuffle(order, rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            batch.clear();
            for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
                batch.push_back(demos[order[i]]);
            }
            const double loss = sft_loss_and_grad(policy, batch, grad);
            if (!std::isfinite(loss)) {
                fail(ErrorCode::NonFiniteLoss, "sft loss " + std::to_string(loss) + " at epoch " +
                                                   std::to_string(epoch) + ", step " + std::to_string(steps));
            }
            if (loss <= config.early_stop_loss) {
                stopped = true;
                break;
            }
            optimizer.step(policy.parameters(), grad);
            ++steps;
        }
        epoch_nll.push_back(sft_loss(policy, demos));
    }
    return SftResult{snapshot(policy, 0), steps, std::move(epoch_nll)};
}

double softplus(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double dpo_loss(const Policy& policy, const PolicySnapshot& reference,
                std::span<const ComparisonTriple> batch, double alpha) {
    if (batch.empty()) {
        fail(ErrorCode::InvalidArgument, "dpo loss over an empty batch");
    }
    const Policy& ref = reference.policy();
    double total = 0.0;
    for (const auto& c : batch) {
        const double margin = (policy.logprob(c.prompt, c.winner) - ref.logprob(c.prompt, c.winner)) -
                              (policy.logprob(c.prompt, c.loser) - ref.logprob(c.prompt, c.loser));
        total -= log_sigmoid(alpha * margin);
    }
    return total / static_cast<double>(batch.size());
}

double dpo_loss_and_grad(const Policy& policy, const PolicySnapshot& reference,
                         std::span<const ComparisonTriple> batch, double alpha, std::vector<double>& grad) {
    if (batch.empty()) {
        fail(ErrorCode::InvalidArgument, "dpo loss over an empty batch");
    }
    const Policy& ref = reference.policy();
    grad.assign(policy.parameters().size(), 0.0);
    const double n = static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto& c : batch) {
        const double margin = (policy.logprob(c.prompt, c.winner) - ref.logprob(c.prompt, c.winner)) -
                              (policy.logprob(c.prompt, c.loser) - ref.logprob(c.prompt, c.loser));
        const double z = alpha * margin;
        total += softplus(-z);
        // d softplus(-z) / dz = -sigma(-z)
        const double coef = -sigmoid(-z) * alpha / n;
        policy.accumulate_grad_logprob(c.prompt, c.winner, coef, grad);
        policy.accumulate_grad_logprob(c.prompt, c.loser, -coef, grad);
    }
    return total / n;
}

double dpo_step(Policy& policy, const PolicySnapshot& reference, std::span<const ComparisonTriple> batch,
                double alpha, AdamW& optimizer) {
    std::vector<double> grad;
    const double loss = dpo_loss_and_grad(policy, reference, batch, alpha, grad);
    if (!std::isfinite(loss)) {
        fail(ErrorCode::NonFiniteLoss, "dpo loss is " + std::to_string(loss));
    }
    optimizer.step(policy.parameters(), grad);
    return loss;
}

std::string_view to_string(AblationVariant variant) {
    switch (variant) {
        case AblationVariant::Full: return "full";
        case AblationVariant::SampleAtStart: return "sample_at_start";
        case AblationVariant::UpdateReference: return "update_reference";
        case AblationVariant::NoReplay: return "no_replay";
        case AblationVariant::NoIntermodel: return "no_intermodel";
    }
    return "unknown";
}

AblationVariant variant_from_string(std::string_view name) {
    for (auto v : kAllVariants) {
        if (to_string(v) == name) {
            return v;
        }
    }
    fail(ErrorCode::ConfigError, "variant: unknown value '" + std::string(name) + "'");
}

std::string_view to_string(ResampleMode mode) {
    return mode == ResampleMode::EveryK ? "every_k" : "k_rounds";
}

ResampleMode resample_mode_from_string(std::string_view name) {
    if (name == "every_k") {
        return ResampleMode::EveryK;
    }
    if (name == "k_rounds") {
        return ResampleMode::KRounds;
    }
    fail(ErrorCode::ConfigError, "ditto.resample_mode: unknown value '" + std::string(name) + "'");
}

void DittoConfig::validate() const {
    require(samples_per_demo >= 1, "ditto.samples_per_demo", "must be at least 1");
    require(resample_every >= 1, "ditto.resample_every", "must be at least 1");
    require(total_steps >= 1, "ditto.total_steps", "must be at least 1");
    require(batch_size >= 1, "ditto.batch_size", "must be at least 1");
    require(alpha > 0.0 && std::isfinite(alpha), "ditto.alpha", "must be positive");
    require(temperature > 0.0 && std::isfinite(temperature), "ditto.temperature", "must be positive");
    require(dpo_learning_rate >= 0.0, "ditto.dpo_learning_rate", "must be non-negative");
    require(dpo_warmup_ratio >= 0.0 && dpo_warmup_ratio <= 1.0, "ditto.dpo_warmup_ratio", "must lie in [0, 1]");
    require(weight_decay >= 0.0, "ditto.weight_decay", "must be non-negative");
    mixture.validate();
    sft.validate();
}

std::size_t DittoConfig::sampling_interval() const {
    if (resample_mode == ResampleMode::EveryK) {
        return resample_every;
    }
    return (total_steps + resample_every - 1) / resample_every;
}

MixtureConfig variant_mixture(const MixtureConfig& mixture, AblationVariant variant) {
    MixtureConfig m = mixture;
    if (variant == AblationVariant::NoReplay) {
        m.frac_online += m.frac_replay;
        m.frac_replay = 0.0;
    } else if (variant == AblationVariant::NoIntermodel) {
        m.frac_online += m.frac_intermodel;
        m.frac_intermodel = 0.0;
    }
    return m;
}

namespace {

std::vector<SampledCompletion> sample_round(const Policy& policy, std::span<const Demonstration> demos,
                                            std::size_t per_demo, double temperature, Rng& rng) {
    std::vector<SampledCompletion> out;
    out.reserve(demos.size() * per_demo);
    for (const auto& d : demos) {
        for (auto& y : policy.sample(d.prompt, per_demo, temperature, rng)) {
            out.push_back(SampledCompletion{d.prompt, std::move(y)});
        }
    }
    return out;
}

}  // namespace

RunArtifact ditto_run(const TaskSpec& task, std::span<const Demonstration> demos, const Policy& ref_policy,
                      const DittoConfig& config, AblationVariant variant, const RunOptions& options) {
    config.validate();
    if (demos.empty()) {
        fail(ErrorCode::InvalidArgument, "ditto_run needs at least one demonstration");
    }
    std::unique_ptr<Policy> policy = ref_policy.clone();
    SftResult sft = options.sft ? *options.sft : sft_train(*policy, demos, config.sft);
    if (options.sft) {
        load_parameters(*policy, sft.snapshot);
    }

    RunArtifact run{variant, sft, {sft.snapshot}, {}, {}, RankingStore({demos.begin(), demos.end()}), 0};
    PolicySnapshot reference = sft.snapshot;
    const MixtureConfig mixture = variant_mixture(config.mixture, variant);
    const std::size_t interval = config.sampling_interval();
    const std::size_t rounds = (config.total_steps + interval - 1) / interval;

    Rng sample_rng(mix_seed(config.seed, 0xa11));
    Rng batch_rng(mix_seed(config.seed, 0xb47));
    AdamW optimizer(policy->parameters(),
                    AdamWConfig{config.dpo_learning_rate, 0.9, 0.999, 1e-8, config.weight_decay},
                    Schedule{config.dpo_schedule, config.dpo_warmup_ratio, config.total_steps});
    RewardFn reward;
    if (options.reward != nullptr) {
        reward = [table = options.reward](const Prompt& x, const Completion& y) { return (*table)(x, y); };
    }

    int t = 0;
    for (std::size_t step = 0; step < config.total_steps; ++step) {
        try {
            if (step % interval == 0) {
                if (step > 0) {
                    ++t;
                    run.snapshots.push_back(snapshot(*policy, t));
                    if (variant == AblationVariant::UpdateReference) {
                        reference = run.snapshots.back();
                    }
                }
                if (variant != AblationVariant::SampleAtStart) {
                    run.store.add_checkpoint_dataset(t, sample_round(*policy, demos, config.samples_per_demo,
                                                                     config.temperature, sample_rng));
                } else if (step == 0) {
                    run.store.add_checkpoint_dataset(
                        0, sample_round(*policy, demos, config.samples_per_demo * rounds, config.temperature,
                                        sample_rng));
                }
            }
            StepMetrics m;
            m.step = step;
            m.iteration = t;
            const auto batch = run.store.sample_batch(config.batch_size, mixture, batch_rng, &m.batch);
            run.store.note_skipped(m.batch.skipped);
            run.reference_fingerprints.push_back(reference.fingerprint());
            // A batch whose every pair was skipped leaves the parameters alone.
            if (!batch.empty()) {
                m.loss = dpo_step(*policy, reference, batch, config.alpha, optimizer);
            }
            if (options.reward != nullptr) {
                m.true_reward = expected_reward(*policy, reward, task);
                m.j_kl = j_kl(*policy, sft.snapshot.policy(), reward, options.reward->alpha(), task);
            }
            run.metrics.push_back(m);
        } catch (const Error& e) {
            throw Error(e.code(), "iteration " + std::to_string(t) + ", step " + std::to_string(step) + ": " +
                                      e.detail());
        }
    }
    run.snapshots.push_back(snapshot(*policy, t + 1));
    run.skipped_pairs = run.store.skipped();
    return run;
}

PolicySnapshot pairwise_dpo_baseline(const PolicySnapshot& reference, std::span<const ComparisonTriple> pairs,
                                     const DittoConfig& config) {
    config.validate();
    if (pairs.empty()) {
        return reference;
    }
    std::unique_ptr<Policy> policy = restore(reference);
    const std::size_t steps = config.pairwise_steps > 0 ? config.pairwise_steps : config.total_steps;
    AdamW optimizer(policy->parameters(),
                    AdamWConfig{config.dpo_learning_rate, 0.9, 0.999, 1e-8, config.weight_decay},
                    Schedule{config.dpo_schedule, config.dpo_warmup_ratio, steps});
    Rng rng(mix_seed(config.seed, 0x9a1));
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    std::vector<ComparisonTriple> batch;
    for (std::size_t step = 0; step < steps; ++step) {
        batch.clear();
        while (batch.size() < std::min(config.batch_size, pairs.size())) {
            if (cursor == order.size()) {
                shuffle(order, rng);
                cursor = 0;
            }
            batch.push_back(pairs[order[cursor++]]);
        }
        try {
            dpo_step(*policy, reference, batch, config.alpha, optimizer);
        } catch (const Error& e) {
            throw Error(e.code(), "pairwise step " + std::to_string(step) + ": " + e.detail());
        }
    }
    return snapshot(*policy, 0);
}

}  // namespace demoalign

// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tiny next-token model: a window of the last `context` tokens of
// prompt ++ completion-prefix is embedded, concatenated with a completion
// position embedding, passed through one or two tanh layers and projected to
// next-token logits.
//
// Termination: without an end token every completion has exactly max_length
// tokens. With an end token (output index == vocab_size), a completion stops
// when END is emitted or when max_length tokens have been produced; END is
// masked at the first position so completions are never empty. Mass of
// sequences that would run past max_length is assigned to the length-max_length
// prefix, so the enumerable space is exactly normalized.

#pragma once

#include "demoalign/policy.h"

namespace demoalign {

struct AutoregressiveShape {
    int vocab_size = 4;
    int context = 8;
    int embed_dim = 8;
    int hidden_dim = 32;
    int hidden_layers = 1;
    int max_length = 4;
    bool end_token = false;

    /// Enforces vocab <= 64, context <= 32, 1-2 hidden layers and <= 100k parameters.
    void validate() const;
    std::size_t parameter_count() const;

    bool operator==(const AutoregressiveShape&) const = default;
};

class AutoregressivePolicy final : public Policy {
public:
    AutoregressivePolicy(AutoregressiveShape shape, std::uint64_t init_seed, double init_scale = 0.5);

    PolicyKind kind() const override { return PolicyKind::Autoregressive; }
    int max_length() const override { return shape_.max_length; }
    double logprob(const Prompt& x, const Completion& y) const override;
    double accumulate_grad_logprob(const Prompt& x, const Completion& y, double scale,
                                   std::span<double> grad) const override;
    std::vector<Completion> sample(const Prompt& x, std::size_t m, double temperature,
                                   Rng& rng) const override;
    std::vector<Completion> completion_space(const Prompt& x, std::size_t cap) const override;
    std::size_t prediction_count(const Completion& y) const override;
    std::unique_ptr<Policy> clone() const override;
    nlohmann::json architecture() const override;

    const AutoregressiveShape& shape() const noexcept { return shape_; }
    std::size_t output_size() const noexcept;
    int end_id() const noexcept { return shape_.vocab_size; }

    /// Next-token log-probabilities after `prefix` (END last when enabled).
    /// Masked entries are -inf.
    std::vector<double> next_token_logprobs(const Prompt& x, const TokenSeq& prefix,
                                            double temperature = 1.0) const;

private:
    struct StepCache {
        std::vector<int> window;
        int position = 0;
        std::vector<double> input;
        std::vector<std::vector<double>> hidden;
        std::vector<double> logits;
    };

    void forward(const Prompt& x, const TokenSeq& prefix, StepCache& cache) const;
    void backward(const StepCache& cache, std::span<const double> dlogits, std::span<double> grad) const;
    /// Log-softmax of cached logits with END masked at position 0.
    std::vector<double> step_logprobs(const StepCache& cache, double temperature) const;
    /// Output indices of each step of `y`, including END when it was emitted.
    std::vector<int> targets(const Completion& y) const;

    AutoregressiveShape shape_;
    std::size_t off_embed_ = 0;
    std::size_t off_pos_ = 0;
    std::vector<std::size_t> off_w_;
    std::vector<std::size_t> off_b_;
    std::size_t off_out_w_ = 0;
    std::size_t off_out_b_ = 0;
};

}  // namespace demoalign

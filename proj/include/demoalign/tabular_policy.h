// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>

#include "demoalign/policy.h"

namespace demoalign {

/// All token sequences with lengths in [min_len, max_len], ordered by length and
/// then lexicographically by token id. Sequences shorter than `max_len` are
/// marked terminated.
std::vector<Completion> all_sequences(std::size_t vocab_size, int min_len, int max_len,
                                      std::size_t cap = kDefaultEnumerationCap);

/// Softmax over an explicit completion list, one logit row per prompt.
/// Row order follows the completion list given at construction.
class TabularPolicy final : public Policy {
public:
    TabularPolicy(std::vector<int> prompt_ids, std::vector<std::vector<Completion>> completions,
                  int max_length);

    /// Zero logits (uniform) with the same completion list for every prompt.
    static TabularPolicy uniform(const std::vector<Prompt>& prompts,
                                 const std::vector<Completion>& completions, int max_length);

    PolicyKind kind() const override { return PolicyKind::Tabular; }
    int max_length() const override { return max_length_; }
    double logprob(const Prompt& x, const Completion& y) const override;
    double accumulate_grad_logprob(const Prompt& x, const Completion& y, double scale,
                                   std::span<double> grad) const override;
    std::vector<Completion> sample(const Prompt& x, std::size_t m, double temperature,
                                   Rng& rng) const override;
    std::vector<Completion> completion_space(const Prompt& x, std::size_t cap) const override;
    std::size_t prediction_count(const Completion&) const override { return 1; }
    std::unique_ptr<Policy> clone() const override;
    nlohmann::json architecture() const override;

    const std::vector<int>& prompt_ids() const noexcept { return prompt_ids_; }
    std::span<double> logits(int prompt_id);
    std::span<const double> logits(int prompt_id) const;
    void set_logits(int prompt_id, std::span<const double> values);
    /// Temperature-1 probabilities of the prompt's completion list.
    std::vector<double> probabilities(int prompt_id) const;
    const std::vector<Completion>& completions(int prompt_id) const;
    std::optional<std::size_t> index_of(int prompt_id, const TokenSeq& tokens) const;

private:
    std::size_t row(int prompt_id) const;

    int max_length_;
    std::vector<int> prompt_ids_;
    std::vector<std::vector<Completion>> completions_;
    std::vector<std::map<TokenSeq, std::size_t>> lookup_;
    std::vector<std::size_t> offsets_;
};

}  // namespace demoalign

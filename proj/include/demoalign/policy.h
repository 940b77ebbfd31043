// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable policies pi(y|x) over completions, plus immutable snapshots.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "demoalign/core.h"
#include "demoalign/rng.h"

namespace demoalign {

inline constexpr std::size_t kDefaultEnumerationCap = 1'000'000;

enum class PolicyKind : std::uint32_t { Tabular = 1, Autoregressive = 2 };

std::string_view to_string(PolicyKind kind);

struct ParameterBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;

    bool operator==(const ParameterBlock&) const = default;
};

/// Flat parameter storage with a named layout.
class ParameterVector {
public:
    ParameterVector() = default;

    /// Appends a zero-filled block and returns its offset.
    std::size_t add_block(std::string name, std::size_t size);

    std::span<double> block(std::string_view name);
    std::span<const double> block(std::string_view name) const;
    const std::vector<ParameterBlock>& layout() const noexcept { return layout_; }

    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }

    bool all_finite() const;
    /// FNV-1a over the raw bytes of every value.
    std::uint64_t fingerprint() const;

    bool operator==(const ParameterVector&) const = default;

private:
    std::vector<double> values_;
    std::vector<ParameterBlock> layout_;
};

class Policy {
public:
    virtual ~Policy() = default;

    virtual PolicyKind kind() const = 0;
    virtual int max_length() const = 0;

    /// log pi(y|x) at temperature 1. Throws LengthExceeded for overlong y.
    virtual double logprob(const Prompt& x, const Completion& y) const = 0;

    /// Adds scale * d log pi(y|x) / d theta into `grad`; returns log pi(y|x).
    virtual double accumulate_grad_logprob(const Prompt& x, const Completion& y, double scale,
                                           std::span<double> grad) const = 0;

    virtual std::vector<Completion> sample(const Prompt& x, std::size_t m, double temperature,
                                           Rng& rng) const = 0;

    /// Every completion with possibly non-zero probability, in a fixed order.
    /// Throws EnumerationTooLarge when the space exceeds `cap`.
    virtual std::vector<Completion> completion_space(const Prompt& x,
                                                     std::size_t cap = kDefaultEnumerationCap) const = 0;

    /// Number of next-token predictions that make up log pi(y|x).
    virtual std::size_t prediction_count(const Completion& y) const = 0;

    virtual std::unique_ptr<Policy> clone() const = 0;

    /// Everything besides the parameter values needed to rebuild the policy.
    virtual nlohmann::json architecture() const = 0;

    ParameterVector& parameters() noexcept { return params_; }
    const ParameterVector& parameters() const noexcept { return params_; }

protected:
    ParameterVector params_;
};

/// Frozen deep copy of a policy tagged with the iteration it was taken at.
class PolicySnapshot {
public:
    PolicySnapshot(std::shared_ptr<const Policy> policy, int iteration);

    const Policy& policy() const noexcept { return *policy_; }
    std::shared_ptr<const Policy> shared() const noexcept { return policy_; }
    int iteration() const noexcept { return iteration_; }
    PolicyKind kind() const noexcept { return policy_->kind(); }
    const ParameterVector& parameters() const noexcept { return policy_->parameters(); }
    std::uint64_t fingerprint() const { return policy_->parameters().fingerprint(); }

private:
    std::shared_ptr<const Policy> policy_;
    int iteration_;
};

double logprob(const Policy& policy, const Prompt& x, const Completion& y);
std::vector<Completion> sample_completions(const Policy& policy, const Prompt& x, std::size_t m,
                                           double temperature, Rng& rng);
std::vector<double> grad_logprob(const Policy& policy, const Prompt& x, const Completion& y);

PolicySnapshot snapshot(const Policy& policy, int iteration);
/// Mutable copy of the snapshotted policy.
std::unique_ptr<Policy> restore(const PolicySnapshot& snap);
/// Copies the snapshot's parameters into a live policy of the same layout.
void load_parameters(Policy& policy, const PolicySnapshot& snap);

std::unique_ptr<Policy> policy_from_architecture(const nlohmann::json& architecture);

void save_checkpoint(const PolicySnapshot& snap, const std::filesystem::path& path);
PolicySnapshot load_checkpoint(const std::filesystem::path& path);

/// Numerically stable log(sum(exp(v))).
double log_sum_exp(std::span<const double> v);
/// In-place log-softmax.
void log_softmax(std::span<double> v);

}  // namespace demoalign

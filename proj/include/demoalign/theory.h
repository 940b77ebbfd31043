// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Executable checks of the KL-regularized optimality results on enumerable
// instances, plus seeded random sweeps over tabular problems.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "demoalign/core.h"
#include "demoalign/oracle.h"
#include "demoalign/policy.h"

namespace demoalign {

struct TheoremReport {
    std::string name;
    std::string instance;
    /// "==", ">", "<=" or "implies".
    std::string relation;
    double lhs = 0.0;
    double rhs = 0.0;
    double tolerance = 0.0;
    bool pass = false;

    // Extrapolation check only.
    std::optional<double> condition_lhs;
    std::optional<double> condition_rhs;
    std::optional<bool> condition_holds;
    std::optional<bool> extrapolated;

    /// |lhs - rhs| for identities, the size of the violation for inequalities.
    double residual() const;
    nlohmann::json to_json() const;
};

using KlFn = std::function<double(const Policy&, const Policy&, const Prompt&)>;

/// J(pi) == J(pi*) - alpha * E_x KL(pi || pi*), tolerance 1e-9. `kl_fn`
/// replaces the divergence used on the right-hand side.
TheoremReport check_value_decomposition(const Policy& policy, const Policy& ref, const RewardTable& reward,
                                        const TaskSpec& task, const KlFn& kl_fn = {});

/// J(pi*) > J(ref) when pi* differs from ref, equality otherwise.
TheoremReport check_improvement(const Policy& ref, const RewardTable& reward, const TaskSpec& task);

/// Reports the sufficient condition for E_hat[r] > E_demos[r] and passes
/// unless the condition holds while the demos are not exceeded.
TheoremReport check_extrapolation(const Policy& hat, const Policy& ref, std::span<const Demonstration> demos,
                                  const RewardTable& reward, const TaskSpec& task);

struct JensenOptions {
    /// Monte-Carlo pairs when exact enumeration is infeasible or disabled.
    std::size_t sample_count = 10000;
    std::uint64_t seed = 0;
    bool exact_when_feasible = true;
    std::size_t pair_cap = 1'000'000;
};

/// -log sigmoid(E_w[r] - E_l[r]) <= E[-log sigmoid(r(x, y_w) - r(x, y_l))].
TheoremReport check_jensen_bound(const Policy& winner, const Policy& loser, const RewardFn& reward,
                                 const TaskSpec& task, const JensenOptions& options = {});

struct SweepSummary {
    std::string name;
    std::uint64_t seed = 0;
    std::size_t instances = 0;
    std::size_t failures = 0;
    double max_residual = 0.0;
    std::optional<TheoremReport> first_failure;

    nlohmann::json to_json() const;
};

struct VerificationReport {
    std::vector<SweepSummary> sweeps;
    double seconds = 0.0;

    bool all_pass() const;
    nlohmann::json to_json() const;
};

inline constexpr std::uint64_t kDecompositionSeed = 1001;
inline constexpr std::uint64_t kImprovementSeed = 1002;
inline constexpr std::uint64_t kExtrapolationSeed = 1003;
inline constexpr std::uint64_t kJensenSeed = 1004;

SweepSummary sweep_value_decomposition(std::size_t instances, std::uint64_t seed, const KlFn& kl_fn = {});
SweepSummary sweep_improvement(std::size_t instances, std::uint64_t seed);
SweepSummary sweep_extrapolation(std::size_t instances, std::uint64_t seed);
SweepSummary sweep_jensen(std::size_t instances, std::uint64_t seed);

/// 100 / 100 / 1000 / 200 instances with the published seeds.
VerificationReport verify_theory(const KlFn& kl_fn = {});

}  // namespace demoalign

// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "demoalign/theory.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "demoalign/error.h"
#include "demoalign/tabular_policy.h"
#include "demoalign/trainers.h"

namespace demoalign {

namespace {

constexpr double kIdentityTolerance = 1e-9;
// The extrapolation condition is a strict inequality; demand a margin so
// rounding in either side cannot flip it.
constexpr double kConditionMargin = 1e-9;

double expected_divergence(const Policy& a, const Policy& b, const TaskSpec& task, const KlFn& kl_fn) {
    if (!kl_fn) {
        return expected_kl(a, b, task);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < task.prompts.size(); ++i) {
        total += task.weights[i] * kl_fn(a, b, task.prompts[i]);
    }
    return total;
}

std::string describe_task(const TaskSpec& task, double alpha) {
    std::ostringstream os;
    os << "vocab=" << task.vocabulary.size() << " prompts=" << task.prompts.size() << " alpha=" << alpha;
    return os.str();
}

}  // namespace

double TheoremReport::residual() const {
    if (relation == "implies") {
        return (condition_holds.value_or(false) && !extrapolated.value_or(false)) ? 1.0 : 0.0;
    }
    if (relation == ">") {
        return std::max(0.0, rhs - lhs);
    }
    if (relation == "<=") {
        return std::max(0.0, lhs - rhs);
    }
    return std::abs(lhs - rhs);
}

nlohmann::json TheoremReport::to_json() const {
    nlohmann::json j = {{"name", name}, {"instance", instance}, {"relation", relation}, {"lhs", lhs},          {"rhs", rhs},
                        {"tolerance", tolerance}, {"pass", pass}, {"residual", residual()}};
    if (condition_holds) {
        j["condition_lhs"] = *condition_lhs;
        j["condition_rhs"] = *condition_rhs;
        j["condition_holds"] = *condition_holds;
        j["extrapolated"] = *extrapolated;
    }
    return j;
}

TheoremReport check_value_decomposition(const Policy& policy, const Policy& ref, const RewardTable& reward,
                                        const TaskSpec& task, const KlFn& kl_fn) {
    const SoftOptimum opt = soft_optimum(ref, task, reward);
    TheoremReport r;
    r.name = "value_decomposition";
    r.relation = "==";
    r.instance = describe_task(task, reward.alpha());
    r.lhs = j_kl(policy, ref, reward, reward.alpha(), task);
    r.rhs = opt.expected_value(task) - reward.alpha() * expected_divergence(policy, *opt.policy, task, kl_fn);
    r.tolerance = kIdentityTolerance;
    r.pass = std::abs(r.lhs - r.rhs) <= r.tolerance;
    return r;
}

TheoremReport check_improvement(const Policy& ref, const RewardTable& reward, const TaskSpec& task) {
    const SoftOptimum opt = soft_optimum(ref, task, reward);
    TheoremReport r;
    r.name = "improvement";
    r.instance = describe_task(task, reward.alpha());
    r.lhs = opt.expected_value(task);
    r.rhs = j_kl(ref, ref, reward, reward.alpha(), task);
    const double tv = max_total_variation(*opt.policy, ref, task);
    if (tv > 1e-9) {
        r.relation = ">";
        r.tolerance = 0.0;
        r.pass = r.lhs > r.rhs;
    } else {
        r.relation = "==";
        r.tolerance = 1e-12 * std::max(1.0, std::abs(r.rhs));
        r.pass = std::abs(r.lhs - r.rhs) <= r.tolerance;
    }
    return r;
}

TheoremReport check_extrapolation(const Policy& hat, const Policy& ref, std::span<const Demonstration> demos,
                                  const RewardTable& reward, const TaskSpec& task) {
    if (demos.empty()) {
        fail(ErrorCode::InvalidArgument, "extrapolation check needs demonstrations");
    }
    const SoftOptimum opt = soft_optimum(ref, task, reward);
    const double alpha = reward.alpha();
    const double demo_mean = expected_reward(demos, reward);
    const double hat_mean = expected_reward(hat, reward, task);

    TheoremReport r;
    r.name = "extrapolation";
    r.relation = "implies";
    r.instance = describe_task(task, alpha) + " demos=" + std::to_string(demos.size());
    r.condition_lhs = opt.expected_value(task) - demo_mean;
    r.condition_rhs = alpha * expected_kl(hat, *opt.policy, task) - alpha * expected_kl(hat, ref, task);
    r.condition_holds = *r.condition_lhs - *r.condition_rhs > kConditionMargin;
    r.extrapolated = hat_mean > demo_mean;
    r.lhs = hat_mean;
    r.rhs = demo_mean;
    r.tolerance = kConditionMargin;
    r.pass = !*r.condition_holds || *r.extrapolated;
    return r;
}

TheoremReport check_jensen_bound(const Policy& winner, const Policy& loser, const RewardFn& reward,
                                 const TaskSpec& task, const JensenOptions& options) {
    TheoremReport r;
    r.name = "jensen_bound";
    r.relation = "<=";
    r.instance = describe_task(task, 1.0);

    std::vector<std::vector<std::pair<double, double>>> w_dist, l_dist;  // (probability, reward)
    std::size_t pairs = 0;
    bool feasible = options.exact_when_feasible;
    double mean_w = 0.0, mean_l = 0.0;
    if (feasible) {
        try {
            for (std::size_t i = 0; i < task.prompts.size(); ++i) {
                const Prompt& x = task.prompts[i];
                auto collect = [&](const Policy& p) {
                    std::vector<std::pair<double, double>> out;
                    for (const auto& y : p.completion_space(x, options.pair_cap)) {
                        const double prob = std::exp(p.logprob(x, y));
                        if (prob > 0.0) {
                            out.emplace_back(prob, reward(x, y));
                        }
                    }
                    return out;
                };
                w_dist.push_back(collect(winner));
                l_dist.push_back(collect(loser));
                pairs += w_dist.back().size() * l_dist.back().size();
                if (pairs > options.pair_cap) {
                    feasible = false;
                    break;
                }
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::EnumerationTooLarge) {
                throw;
            }
            feasible = false;
        }
    }

    if (feasible) {
        double rhs = 0.0;
        for (std::size_t i = 0; i < task.prompts.size(); ++i) {
            for (const auto& [pw, rw] : w_dist[i]) {
                mean_w += task.weights[i] * pw * rw;
                for (const auto& [pl, rl] : l_dist[i]) {
                    rhs += task.weights[i] * pw * pl * softplus(-(rw - rl));
                }
            }
            for (const auto& [pl, rl] : l_dist[i]) {
                mean_l += task.weights[i] * pl * rl;
            }
        }
        r.lhs = softplus(-(mean_w - mean_l));
        r.rhs = rhs;
        r.tolerance = 1e-12;
        r.instance += " exact";
    } else {
        if (options.sample_count < 2) {
            fail(ErrorCode::InvalidArgument, "Monte-Carlo Jensen check needs at least two samples");
        }
        Rng rng(options.seed);
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t s = 0; s < options.sample_count; ++s) {
            const Prompt& x = task.prompts[rng.categorical(task.weights)];
            const Completion yw = winner.sample(x, 1, 1.0, rng).front();
            const Completion yl = loser.sample(x, 1, 1.0, rng).front();
            const double rw = reward(x, yw);
            const double rl = reward(x, yl);
            const double v = softplus(-(rw - rl));
            sum += v;
            sum_sq += v * v;
            mean_w += rw;
            mean_l += rl;
        }
        const double n = static_cast<double>(options.sample_count);
        mean_w /= n;
        mean_l /= n;
        const double mean = sum / n;
        const double var = std::max(0.0, (sum_sq / n - mean * mean) * n / (n - 1.0));
        r.lhs = softplus(-(expected_reward(winner, reward, task) - expected_reward(loser, reward, task)));
        r.rhs = mean;
        r.tolerance = 3.0 * std::sqrt(var / n);
        r.instance += " monte_carlo n=" + std::to_string(options.sample_count);
    }
    r.pass = r.lhs <= r.rhs + r.tolerance;
    return r;
}

nlohmann::json SweepSummary::to_json() const {
    nlohmann::json j = {{"name", name},         {"seed", seed},
                        {"instances", instances}, {"failures", failures},
                        {"max_residual", max_residual}};
    if (first_failure) {
        j["first_failure"] = first_failure->to_json();
    }
    return j;
}

bool VerificationReport::all_pass() const {
    return std::all_of(sweeps.begin(), sweeps.end(), [](const SweepSummary& s) { return s.failures == 0; });
}

nlohmann::json VerificationReport::to_json() const {
    nlohmann::json j = {{"pass", all_pass()}, {"seconds", seconds}, {"sweeps", nlohmann::json::array()}};
    std::size_t failures = 0;
    for (const auto& s : sweeps) {
        j["sweeps"].push_back(s.to_json());
        failures += s.failures;
    }
    j["failures"] = failures;
    return j;
}

namespace {

struct RandomInstance {
    TaskSpec task;
    std::shared_ptr<TabularPolicy> ref;
    std::shared_ptr<TabularPolicy> policy;
    std::optional<RewardTable> reward;
};

void randomize_logits(TabularPolicy& p, Rng& rng, double scale) {
    for (int id : p.prompt_ids()) {
        for (double& v : p.logits(id)) {
            v = scale * rng.normal();
        }
    }
}

// Vocab 2..5, 1..3 prompts, 2..20 completions per prompt of length 1..3,
// rewards in [-2, 2], alpha in {0.05, 0.5, 1}.
RandomInstance random_instance(Rng& rng) {
    static constexpr double kAlphas[] = {0.05, 0.5, 1.0};
    const std::size_t v = 2 + rng.below(4);
    const std::size_t n_prompts = 1 + rng.below(3);
    const double alpha = kAlphas[rng.below(3)];

    std::vector<std::string> symbols;
    for (std::size_t i = 0; i < v; ++i) {
        symbols.push_back("t" + std::to_string(i));
    }
    const auto all = all_sequences(v, 1, 3, kDefaultEnumerationCap);

    std::vector<Prompt> prompts;
    std::vector<int> ids;
    std::vector<std::vector<Completion>> rows;
    std::vector<RewardTable::Entry> entries;
    for (std::size_t p = 0; p < n_prompts; ++p) {
        const int id = static_cast<int>(p);
        prompts.push_back(Prompt{id, {static_cast<TokenId>(p % v)}});
        ids.push_back(id);
        std::vector<std::size_t> idx(all.size());
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t i = idx.size(); i > 1; --i) {
            std::swap(idx[i - 1], idx[rng.below(i)]);
        }
        const std::size_t k = std::min<std::size_t>(2 + rng.below(19), all.size());
        idx.resize(k);
        std::sort(idx.begin(), idx.end());
        std::vector<Completion> row;
        for (std::size_t i : idx) {
            row.push_back(all[i]);
            entries.push_back({id, all[i].tokens, -2.0 + 4.0 * rng.uniform()});
        }
        rows.push_back(std::move(row));
    }

    RandomInstance inst;
    inst.reward.emplace(RewardTable::from_entries(entries, alpha));
    inst.task = make_task(Vocabulary(symbols), prompts, 3, *inst.reward);
    std::vector<double> w(n_prompts);
    for (double& x : w) {
        x = 0.1 + rng.uniform();
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) {
        x /= total;
    }
    inst.task.weights = w;
    inst.ref = std::make_shared<TabularPolicy>(ids, rows, 3);
    inst.policy = std::make_shared<TabularPolicy>(ids, rows, 3);
    randomize_logits(*inst.ref, rng, 1.5);
    randomize_logits(*inst.policy, rng, 1.5);
    return inst;
}

void record(SweepSummary& s, TheoremReport report, std::size_t index) {
    ++s.instances;
    report.instance += " index=" + std::to_string(index);
    s.max_residual = std::max(s.max_residual, report.residual());
    if (!report.pass) {
        ++s.failures;
        if (!s.first_failure) {
            s.first_failure = std::move(report);
        }
    }
}

}  // namespace

SweepSummary sweep_value_decomposition(std::size_t instances, std::uint64_t seed, const KlFn& kl_fn) {
    SweepSummary s;
    s.name = "value_decomposition";
    s.seed = seed;
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        auto inst = random_instance(rng);
        record(s, check_value_decomposition(*inst.policy, *inst.ref, *inst.reward, inst.task, kl_fn), i);
    }
    return s;
}

SweepSummary sweep_improvement(std::size_t instances, std::uint64_t seed) {
    SweepSummary s;
    s.name = "improvement";
    s.seed = seed;
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        auto inst = random_instance(rng);
        record(s, check_improvement(*inst.ref, *inst.reward, inst.task), i);
    }
    return s;
}

SweepSummary sweep_extrapolation(std::size_t instances, std::uint64_t seed) {
    SweepSummary s;
    s.name = "extrapolation";
    s.seed = seed;
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        auto inst = random_instance(rng);
        // Demos come from a sharper random expert over the reference support.
        TabularPolicy expert = *inst.ref;
        randomize_logits(expert, rng, 3.0);
        std::vector<Demonstration> demos;
        const std::size_t n = 1 + rng.below(5);
        for (std::size_t d = 0; d < n; ++d) {
            const Prompt& x = inst.task.prompts[rng.categorical(inst.task.weights)];
            demos.push_back({x, expert.sample(x, 1, 1.0, rng).front()});
        }
        record(s, check_extrapolation(*inst.policy, *inst.ref, demos, *inst.reward, inst.task), i);
    }
    return s;
}

SweepSummary sweep_jensen(std::size_t instances, std::uint64_t seed) {
    SweepSummary s;
    s.name = "jensen_bound";
    s.seed = seed;
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        auto inst = random_instance(rng);
        JensenOptions options;
        options.seed = mix_seed(seed, i);
        // Every tenth instance exercises the sampled estimate.
        options.exact_when_feasible = i % 10 != 0;
        options.sample_count = 4000;
        record(s, check_jensen_bound(*inst.policy, *inst.ref, *inst.reward, inst.task, options), i);
    }
    return s;
}

VerificationReport verify_theory(const KlFn& kl_fn) {
    const auto start = std::chrono::steady_clock::now();
    VerificationReport report;
    report.sweeps.push_back(sweep_value_decomposition(100, kDecompositionSeed, kl_fn));
    report.sweeps.push_back(sweep_improvement(100, kImprovementSeed));
    report.sweeps.push_back(sweep_extrapolation(1000, kExtrapolationSeed));
    report.sweeps.push_back(sweep_jensen(200, kJensenSeed));
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace demoalign

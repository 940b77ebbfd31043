// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "demoalign/eval.h"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "demoalign/error.h"

namespace demoalign {

std::string_view to_string(Verdict verdict) {
    switch (verdict) {
        case Verdict::A: return "A";
        case Verdict::B: return "B";
        case Verdict::Tie: return "tie";
    }
    return "unknown";
}

std::string_view to_string(JudgeKind kind) {
    return kind == JudgeKind::GroundTruthReward ? "reward" : "external";
}

RewardJudge::RewardJudge(RewardFn reward) : reward_(std::move(reward)) {
    if (!reward_) {
        fail(ErrorCode::InvalidArgument, "reward judge needs a reward function");
    }
}

Verdict RewardJudge::prefer(const Prompt& x, const Completion& a, const Completion& b) const {
    const double ra = reward_(x, a);
    const double rb = reward_(x, b);
    if (ra > rb) {
        return Verdict::A;
    }
    return rb > ra ? Verdict::B : Verdict::Tie;
}

namespace {

double score_for_a(Verdict v) {
    switch (v) {
        case Verdict::A: return 1.0;
        case Verdict::B: return 0.0;
        case Verdict::Tie: return 0.5;
    }
    return 0.5;
}

double sem_of(const std::vector<double>& xs) {
    if (xs.size() < 2) {
        return 0.0;
    }
    double mean = 0.0;
    for (double x : xs) {
        mean += x;
    }
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - mean) * (x - mean);
    }
    const double n = static_cast<double>(xs.size());
    return std::sqrt(ss / (n - 1.0) / n);
}

}  // namespace

WinRateResult head_to_head(const Policy& a, const Policy& b, const TaskSpec& task, const Judge& judge,
                           const HeadToHeadOptions& options) {
    if (options.samples_per_prompt == 0) {
        fail(ErrorCode::InvalidArgument, "samples_per_prompt must be at least 1");
    }
    if (task.prompts.empty()) {
        fail(ErrorCode::InvalidArgument, "head_to_head needs at least one prompt");
    }
    const std::uint64_t key_a = mix_seed(options.seed, a.parameters().fingerprint());
    const std::uint64_t key_b = mix_seed(options.seed, b.parameters().fingerprint());

    WinRateResult out;
    std::vector<double> pair_scores;
    std::vector<double> prompt_rates;
    for (const auto& x : task.prompts) {
        Rng rng_a(mix_seed(key_a, static_cast<std::uint64_t>(x.id)));
        Rng rng_b(mix_seed(key_b, static_cast<std::uint64_t>(x.id)));
        const auto ya = a.sample(x, options.samples_per_prompt, options.temperature, rng_a);
        const auto yb = b.sample(x, options.samples_per_prompt, options.temperature, rng_b);
        double prompt_wins = 0.0;
        for (std::size_t i = 0; i < options.samples_per_prompt; ++i) {
            double s = score_for_a(judge.prefer(x, ya[i], yb[i]));
            ++out.judge_calls;
            if (options.order_swap) {
                s = 0.5 * (s + (1.0 - score_for_a(judge.prefer(x, yb[i], ya[i]))));
                ++out.judge_calls;
            }
            prompt_wins += s;
            pair_scores.push_back(s);
        }
        const double n = static_cast<double>(options.samples_per_prompt);
        out.per_prompt.push_back({x.id, options.samples_per_prompt, prompt_wins / n});
        prompt_rates.push_back(prompt_wins / n);
        out.wins += prompt_wins;
        out.pairs += options.samples_per_prompt;
    }
    out.win_rate = out.wins / static_cast<double>(out.pairs);
    out.sem = prompt_rates.size() > 1 ? sem_of(prompt_rates) : sem_of(pair_scores);
    return out;
}

std::vector<ComparisonTriple> synth_annotate(const Policy& policy, const TaskSpec& task, const RewardFn& reward,
                                             std::size_t n_pairs, Rng& rng, int iteration) {
    if (n_pairs == 0) {
        fail(ErrorCode::InvalidArgument, "synth_annotate needs n_pairs >= 1");
    }
    constexpr std::size_t kMinDraws = 20;
    std::vector<ComparisonTriple> out;
    out.reserve(n_pairs);
    std::size_t draws = 0;
    std::size_t ties = 0;
    while (out.size() < n_pairs) {
        const Prompt& x = task.prompts[rng.categorical(task.weights)];
        auto ys = policy.sample(x, 2, 1.0, rng);
        const double r0 = reward(x, ys[0]);
        const double r1 = reward(x, ys[1]);
        ++draws;
        if (r0 == r1) {
            ++ties;
            if (draws >= kMinDraws && static_cast<double>(ties) > 0.9 * static_cast<double>(draws)) {
                fail(ErrorCode::DegenerateRewards, std::to_string(ties) + " of " + std::to_string(draws) +
                                                       " annotated draws tied");
            }
            continue;
        }
        const bool first = r0 > r1;
        out.push_back(ComparisonTriple{x, first ? ys[0] : ys[1], first ? ys[1] : ys[0],
                                       SourceTag::checkpoint(iteration), SourceTag::checkpoint(iteration),
                                       PairCategory::Annotated});
    }
    return out;
}

void write_win_rate_csv(const std::filesystem::path& path, const std::vector<WinRateRow>& rows) {
    std::ofstream os(path);
    if (!os) {
        fail(ErrorCode::IoError, "cannot write " + path.string());
    }
    os << "policy_a,policy_b,judge,prompts,pairs,win_rate,sem\n" << std::setprecision(10);
    for (const auto& r : rows) {
        os << r.policy_a << ',' << r.policy_b << ',' << r.judge << ',' << r.result.per_prompt.size() << ','
           << r.result.pairs << ',' << r.result.win_rate << ',' << r.result.sem << '\n';
    }
    if (!os) {
        fail(ErrorCode::IoError, "write failed for " + path.string());
    }
}

}  // namespace demoalign

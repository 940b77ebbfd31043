// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "demoalign/oracle.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "demoalign/error.h"

namespace demoalign {

RewardTable::RewardTable(RewardFn reward, double alpha) : reward_(std::move(reward)), alpha_(alpha) {
    if (!reward_) {
        fail(ErrorCode::InvalidArgument, "reward table needs a reward function");
    }
    if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) {
        fail(ErrorCode::InvalidArgument, "alpha must be positive and finite");
    }
}

RewardTable RewardTable::from_entries(const std::vector<Entry>& entries, double alpha) {
    auto table = std::make_shared<std::map<std::pair<int, TokenSeq>, double>>();
    for (const auto& e : entries) {
        if (!std::isfinite(e.reward)) {
            fail(ErrorCode::InvalidArgument, "reward entries must be finite");
        }
        if (!table->emplace(std::make_pair(e.prompt_id, e.completion), e.reward).second) {
            fail(ErrorCode::InvalidArgument, "duplicate reward entry for prompt " + std::to_string(e.prompt_id));
        }
    }
    RewardFn fn = [table](const Prompt& x, const Completion& y) {
        auto it = table->find({x.id, y.tokens});
        if (it == table->end()) {
            fail(ErrorCode::InvalidArgument,
                 "reward table has no entry for prompt " + std::to_string(x.id));
        }
        return it->second;
    };
    return RewardTable(std::move(fn), alpha);
}

RewardTable RewardTable::load(const std::filesystem::path& path, const Vocabulary& vocabulary) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::IoError, "cannot open reward table " + path.string());
    }
    try {
        const auto doc = nlohmann::json::parse(in);
        std::vector<Entry> entries;
        for (const auto& e : doc.at("entries")) {
            entries.push_back({e.at("prompt_id").get<int>(),
                               vocabulary.encode(e.at("completion").get<std::vector<std::string>>()),
                               e.at("reward").get<double>()});
        }
        return from_entries(entries, doc.at("alpha").get<double>());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, "reward table " + path.string() + ": " + e.what());
    }
}

double RewardTable::operator()(const Prompt& x, const Completion& y) const {
    const double r = reward_(x, y);
    if (!std::isfinite(r)) {
        fail(ErrorCode::InvalidArgument, "non-finite reward");
    }
    return r;
}

std::size_t edit_distance(const TokenSeq& a, const TokenSeq& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) {
        prev[j] = j;
    }
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        prev.swap(cur);
    }
    return prev[b.size()];
}

namespace {

const TokenSeq& target_for(const std::map<int, TokenSeq>& targets, int prompt_id) {
    auto it = targets.find(prompt_id);
    if (it == targets.end()) {
        fail(ErrorCode::InvalidArgument, "no reward target for prompt " + std::to_string(prompt_id));
    }
    return it->second;
}

}  // namespace

RewardFn pattern_match_reward(std::map<int, TokenSeq> targets) {
    auto shared = std::make_shared<const std::map<int, TokenSeq>>(std::move(targets));
    return [shared](const Prompt& x, const Completion& y) {
        const auto& t = target_for(*shared, x.id);
        const std::size_t n = std::max(t.size(), y.tokens.size());
        if (n == 0) {
            return 1.0;
        }
        std::size_t hits = 0;
        for (std::size_t i = 0; i < std::min(t.size(), y.tokens.size()); ++i) {
            hits += t[i] == y.tokens[i] ? 1 : 0;
        }
        return static_cast<double>(hits) / static_cast<double>(n);
    };
}

RewardFn edit_distance_reward(std::map<int, TokenSeq> targets) {
    auto shared = std::make_shared<const std::map<int, TokenSeq>>(std::move(targets));
    return [shared](const Prompt& x, const Completion& y) {
        const auto& t = target_for(*shared, x.id);
        const std::size_t n = std::max(t.size(), y.tokens.size());
        if (n == 0) {
            return 1.0;
        }
        return 1.0 - static_cast<double>(edit_distance(t, y.tokens)) / static_cast<double>(n);
    };
}

const PromptOptimum& SoftOptimum::at(int prompt_id) const {
    for (const auto& p : prompts) {
        if (p.prompt_id == prompt_id) {
            return p;
        }
    }
    fail(ErrorCode::InvalidArgument, "soft optimum has no prompt " + std::to_string(prompt_id));
}

double SoftOptimum::expected_value(const TaskSpec& task) const {
    double total = 0.0;
    for (std::size_t i = 0; i < task.prompts.size(); ++i) {
        total += task.weights[i] * at(task.prompts[i].id).value;
    }
    return total;
}

SoftOptimum soft_optimum(const Policy& ref, const TaskSpec& task, const RewardTable& reward,
                         std::size_t cap) {
    SoftOptimum out;
    out.alpha = reward.alpha();
    std::vector<int> ids;
    std::vector<std::vector<Completion>> rows;
    std::vector<std::vector<double>> logit_rows;
    for (const auto& x : task.prompts) {
        PromptOptimum po;
        po.prompt_id = x.id;
        std::vector<double> log_weight;
        for (auto& y : ref.completion_space(x, cap)) {
            const double lref = ref.logprob(x, y);
            if (!std::isfinite(lref)) {
                continue;
            }
            log_weight.push_back(lref + reward(x, y) / reward.alpha());
            po.completions.push_back(std::move(y));
        }
        if (po.completions.empty()) {
            fail(ErrorCode::SupportMismatch, "reference has no support on prompt " + std::to_string(x.id));
        }
        po.log_partition = log_sum_exp(log_weight);
        po.value = reward.alpha() * po.log_partition;
        std::vector<double> logits(log_weight.size());
        for (std::size_t i = 0; i < log_weight.size(); ++i) {
            logits[i] = log_weight[i] - po.log_partition;
            po.probabilities.push_back(std::exp(logits[i]));
        }
        ids.push_back(x.id);
        rows.push_back(po.completions);
        logit_rows.push_back(std::move(logits));
        out.prompts.push_back(std::move(po));
    }
    auto policy = std::make_shared<TabularPolicy>(ids, rows, task.max_completion_length);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        policy->set_logits(ids[r], logit_rows[r]);
    }
    out.policy = std::move(policy);
    return out;
}

double kl(const Policy& a, const Policy& b, const Prompt& x, std::size_t cap) {
    double total = 0.0;
    for (const auto& y : a.completion_space(x, cap)) {
        const double la = a.logprob(x, y);
        if (!std::isfinite(la)) {
            continue;
        }
        const double lb = b.logprob(x, y);
        if (!std::isfinite(lb)) {
            fail(ErrorCode::SupportMismatch,
                 "first policy has mass where the second has none (prompt " + std::to_string(x.id) + ")");
        }
        total += std::exp(la) * (la - lb);
    }
    return total;
}

double expected_kl(const Policy& a, const Policy& b, const TaskSpec& task, std::size_t cap) {
    double total = 0.0;
    for (std::size_t i = 0; i < task.prompts.size(); ++i) {
        total += task.weights[i] * kl(a, b, task.prompts[i], cap);
    }
    return total;
}

double j_kl(const Policy& policy, const Policy& ref, const RewardFn& reward, double alpha,
            const TaskSpec& task, std::size_t cap) {
    if (!(alpha > 0.0)) {
        fail(ErrorCode::InvalidArgument, "alpha must be positive");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < task.prompts.size(); ++i) {
        const Prompt& x = task.prompts[i];
        double inner = 0.0;
        for (const auto& y : policy.completion_space(x, cap)) {
            const double lp = policy.logprob(x, y);
            if (!std::isfinite(lp)) {
                continue;
            }
            const double lref = ref.logprob(x, y);
            if (!std::isfinite(lref)) {
                fail(ErrorCode::SupportMismatch, "policy has mass outside the reference support");
            }
            inner += std::exp(lp) * (reward(x, y) - alpha * (lp - lref));
        }
        total += task.weights[i] * inner;
    }
    return total;
}

double expected_reward(const Policy& policy, const RewardFn& reward, const TaskSpec& task,
                       std::size_t cap) {
    double total = 0.0;
    for (std::size_t i = 0; i < task.prompts.size(); ++i) {
        const Prompt& x = task.prompts[i];
        double inner = 0.0;
        for (const auto& y : policy.completion_space(x, cap)) {
            const double lp = policy.logprob(x, y);
            if (std::isfinite(lp)) {
                inner += std::exp(lp) * reward(x, y);
            }
        }
        total += task.weights[i] * inner;
    }
    return total;
}

double expected_reward(std::span<const Demonstration> demos, const RewardFn& reward) {
    if (demos.empty()) {
        fail(ErrorCode::InvalidArgument, "expected reward of an empty dataset");
    }
    double total = 0.0;
    for (const auto& d : demos) {
        total += reward(d.prompt, d.completion);
    }
    return total / static_cast<double>(demos.size());
}

double max_total_variation(const Policy& a, const Policy& b, const TaskSpec& task, std::size_t cap) {
    double worst = 0.0;
    for (const auto& x : task.prompts) {
        std::map<TokenSeq, double> diff;
        for (const auto& y : a.completion_space(x, cap)) {
            diff[y.tokens] += std::exp(a.logprob(x, y));
        }
        for (const auto& y : b.completion_space(x, cap)) {
            diff[y.tokens] -= std::exp(b.logprob(x, y));
        }
        double tv = 0.0;
        for (const auto& [_, d] : diff) {
            tv += std::abs(d);
        }
        worst = std::max(worst, 0.5 * tv);
    }
    return worst;
}

}  // namespace demoalign

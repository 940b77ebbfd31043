// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "demoalign/tabular_policy.h"

#include <cmath>
#include <limits>

#include "demoalign/error.h"

namespace demoalign {

std::vector<Completion> all_sequences(std::size_t vocab_size, int min_len, int max_len,
                                      std::size_t cap) {
    if (vocab_size == 0 || min_len < 0 || max_len < min_len) {
        fail(ErrorCode::InvalidArgument, "invalid sequence enumeration bounds");
    }
    std::size_t total = 0;
    std::size_t per_len = 1;
    for (int len = 0; len <= max_len; ++len) {
        if (len >= min_len) {
            total += per_len;
            if (total > cap) {
                fail(ErrorCode::EnumerationTooLarge,
                     "more than " + std::to_string(cap) + " completions");
            }
        }
        per_len = per_len > cap / vocab_size ? cap + 1 : per_len * vocab_size;
    }
    std::vector<Completion> out;
    out.reserve(total);
    for (int len = std::max(min_len, 0); len <= max_len; ++len) {
        TokenSeq seq(static_cast<std::size_t>(len), 0);
        while (true) {
            out.push_back(Completion{seq, len < max_len});
            int pos = len - 1;
            while (pos >= 0 && static_cast<std::size_t>(seq[static_cast<std::size_t>(pos)]) + 1 == vocab_size) {
                seq[static_cast<std::size_t>(pos)] = 0;
                --pos;
            }
            if (pos < 0) {
                break;
            }
            ++seq[static_cast<std::size_t>(pos)];
        }
    }
    return out;
}

TabularPolicy::TabularPolicy(std::vector<int> prompt_ids,
                             std::vector<std::vector<Completion>> completions, int max_length)
    : max_length_(max_length), prompt_ids_(std::move(prompt_ids)), completions_(std::move(completions)) {
    if (prompt_ids_.empty() || prompt_ids_.size() != completions_.size()) {
        fail(ErrorCode::InvalidArgument, "tabular policy needs one completion list per prompt");
    }
    for (std::size_t r = 0; r < prompt_ids_.size(); ++r) {
        for (std::size_t q = 0; q < r; ++q) {
            if (prompt_ids_[q] == prompt_ids_[r]) {
                fail(ErrorCode::InvalidArgument, "duplicate prompt id in tabular policy");
            }
        }
        if (completions_[r].empty()) {
            fail(ErrorCode::InvalidArgument, "tabular row needs at least one completion");
        }
        std::map<TokenSeq, std::size_t> index;
        for (std::size_t i = 0; i < completions_[r].size(); ++i) {
            const auto& c = completions_[r][i];
            if (c.tokens.size() > static_cast<std::size_t>(max_length_)) {
                fail(ErrorCode::LengthExceeded, "tabular completion longer than max_length");
            }
            if (!index.emplace(c.tokens, i).second) {
                fail(ErrorCode::InvalidArgument, "duplicate completion in tabular row");
            }
        }
        lookup_.push_back(std::move(index));
        offsets_.push_back(params_.add_block("logits/" + std::to_string(prompt_ids_[r]),
                                             completions_[r].size()));
    }
}

TabularPolicy TabularPolicy::uniform(const std::vector<Prompt>& prompts,
                                     const std::vector<Completion>& completions, int max_length) {
    std::vector<int> ids;
    std::vector<std::vector<Completion>> rows;
    for (const auto& p : prompts) {
        ids.push_back(p.id);
        rows.push_back(completions);
    }
    return TabularPolicy(std::move(ids), std::move(rows), max_length);
}

std::size_t TabularPolicy::row(int prompt_id) const {
    for (std::size_t r = 0; r < prompt_ids_.size(); ++r) {
        if (prompt_ids_[r] == prompt_id) {
            return r;
        }
    }
    fail(ErrorCode::InvalidArgument, "tabular policy has no row for prompt " + std::to_string(prompt_id));
}

std::span<double> TabularPolicy::logits(int prompt_id) {
    const std::size_t r = row(prompt_id);
    return std::span<double>(params_.values()).subspan(offsets_[r], completions_[r].size());
}

std::span<const double> TabularPolicy::logits(int prompt_id) const {
    const std::size_t r = row(prompt_id);
    return std::span<const double>(params_.values()).subspan(offsets_[r], completions_[r].size());
}

void TabularPolicy::set_logits(int prompt_id, std::span<const double> values) {
    auto dst = logits(prompt_id);
    if (values.size() != dst.size()) {
        fail(ErrorCode::InvalidArgument, "logit row size mismatch");
    }
    std::copy(values.begin(), values.end(), dst.begin());
}

std::vector<double> TabularPolicy::probabilities(int prompt_id) const {
    auto l = logits(prompt_id);
    std::vector<double> p(l.begin(), l.end());
    log_softmax(p);
    for (double& v : p) {
        v = std::exp(v);
    }
    return p;
}

const std::vector<Completion>& TabularPolicy::completions(int prompt_id) const {
    return completions_[row(prompt_id)];
}

std::optional<std::size_t> TabularPolicy::index_of(int prompt_id, const TokenSeq& tokens) const {
    const auto& index = lookup_[row(prompt_id)];
    auto it = index.find(tokens);
    if (it == index.end()) {
        return std::nullopt;
    }
    return it->second;
}

double TabularPolicy::logprob(const Prompt& x, const Completion& y) const {
    if (y.tokens.size() > static_cast<std::size_t>(max_length_)) {
        fail(ErrorCode::LengthExceeded, "completion longer than " + std::to_string(max_length_));
    }
    auto idx = index_of(x.id, y.tokens);
    if (!idx) {
        return -std::numeric_limits<double>::infinity();
    }
    auto l = logits(x.id);
    return l[*idx] - log_sum_exp(l);
}

double TabularPolicy::accumulate_grad_logprob(const Prompt& x, const Completion& y, double scale,
                                              std::span<double> grad) const {
    if (y.tokens.size() > static_cast<std::size_t>(max_length_)) {
        fail(ErrorCode::LengthExceeded, "completion longer than " + std::to_string(max_length_));
    }
    auto idx = index_of(x.id, y.tokens);
    if (!idx) {
        fail(ErrorCode::SupportMismatch, "completion outside the tabular support has no gradient");
    }
    const std::size_t r = row(x.id);
    auto l = logits(x.id);
    std::vector<double> lp(l.begin(), l.end());
    log_softmax(lp);
    auto g = grad.subspan(offsets_[r], lp.size());
    for (std::size_t i = 0; i < lp.size(); ++i) {
        g[i] -= scale * std::exp(lp[i]);
    }
    g[*idx] += scale;
    return lp[*idx];
}

std::vector<Completion> TabularPolicy::sample(const Prompt& x, std::size_t m, double temperature,
                                              Rng& rng) const {
    if (m < 1 || !(temperature > 0.0)) {
        fail(ErrorCode::InvalidArgument, "sample needs m >= 1 and temperature > 0");
    }
    auto l = logits(x.id);
    std::vector<double> w(l.begin(), l.end());
    for (double& v : w) {
        v /= temperature;
    }
    log_softmax(w);
    for (double& v : w) {
        v = std::exp(v);
    }
    const auto& comps = completions(x.id);
    std::vector<Completion> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        out.push_back(comps[rng.categorical(w)]);
    }
    return out;
}

std::vector<Completion> TabularPolicy::completion_space(const Prompt& x, std::size_t cap) const {
    const auto& comps = completions(x.id);
    if (comps.size() > cap) {
        fail(ErrorCode::EnumerationTooLarge, "tabular row exceeds enumeration cap");
    }
    return comps;
}

std::unique_ptr<Policy> TabularPolicy::clone() const {
    return std::make_unique<TabularPolicy>(*this);
}

nlohmann::json TabularPolicy::architecture() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < prompt_ids_.size(); ++r) {
        nlohmann::json comps = nlohmann::json::array();
        for (const auto& c : completions_[r]) {
            comps.push_back({{"tokens", c.tokens}, {"terminated", c.terminated}});
        }
        rows.push_back({{"prompt_id", prompt_ids_[r]}, {"completions", comps}});
    }
    return {{"kind", "tabular"}, {"max_length", max_length_}, {"rows", rows}};
}

}  // namespace demoalign

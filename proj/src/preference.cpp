// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "demoalign/preference.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "demoalign/error.h"

namespace demoalign {

void MixtureConfig::validate() const {
    const std::array<std::pair<const char*, double>, 3> fields = {
        {{"mixture.frac_online", frac_online},
         {"mixture.frac_replay", frac_replay},
         {"mixture.frac_intermodel", frac_intermodel}}};
    for (const auto& [name, value] : fields) {
        if (!(value >= 0.0 && value <= 1.0)) {
            fail(ErrorCode::ConfigError, std::string(name) + " must lie in [0, 1]");
        }
    }
    if (std::abs(frac_online + frac_replay + frac_intermodel - 1.0) > 1e-9) {
        fail(ErrorCode::ConfigError,
             "mixture.frac_online + mixture.frac_replay + mixture.frac_intermodel must sum to 1");
    }
}

std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& fractions) {
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double share = fractions[i] * static_cast<double>(total);
        const double whole = std::floor(share);
        counts[i] = static_cast<std::size_t>(whole);
        remainder[i] = share - whole;
        assigned += counts[i];
    }
    std::array<std::size_t, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < total; k = (k + 1) % 3) {
        ++counts[order[k]];
        ++assigned;
    }
    return counts;
}

RankingStore::RankingStore(std::vector<Demonstration> expert) : expert_(std::move(expert)) {
    if (expert_.empty()) {
        fail(ErrorCode::InvalidArgument, "ranking store needs at least one demonstration");
    }
    for (std::size_t i = 0; i < expert_.size(); ++i) {
        expert_by_prompt_[expert_[i].prompt.id].push_back(i);
    }
}

int RankingStore::current_iteration() const noexcept {
    return datasets_.empty() ? -1 : datasets_.back().iteration;
}

void RankingStore::add_checkpoint_dataset(const PolicySnapshot& snapshot,
                                          std::vector<SampledCompletion> samples) {
    add_checkpoint_dataset(snapshot.iteration(), std::move(samples));
}

void RankingStore::add_checkpoint_dataset(int iteration, std::vector<SampledCompletion> samples) {
    const int t = current_iteration();
    const bool next = iteration == t + 1;
    const bool same = !datasets_.empty() && iteration == t;
    if (!next && !same) {
        fail(ErrorCode::IterationOrderViolation,
             "dataset for iteration " + std::to_string(iteration) + " added to a store at t = " +
                 std::to_string(t));
    }
    if (next) {
        datasets_.push_back(CheckpointDataset{iteration, {}, 0});
        by_prompt_.emplace_back();
    }
    auto& ds = datasets_.back();
    auto& index = by_prompt_.back();
    for (auto& s : samples) {
        if (auto it = expert_by_prompt_.find(s.prompt.id); it != expert_by_prompt_.end()) {
            for (std::size_t e : it->second) {
                if (expert_[e].completion.tokens == s.completion.tokens) {
                    ++ds.expert_duplicates;
                    break;
                }
            }
        }
        index[s.prompt.id].push_back(ds.samples.size());
        ds.samples.push_back(std::move(s));
    }
}

namespace {

template <typename T>
const T& pick(const std::vector<T>& items, Rng& rng) {
    return items[rng.below(items.size())];
}

}  // namespace

std::vector<ComparisonTriple> RankingStore::sample_batch(std::size_t batch_size,
                                                         const MixtureConfig& mixture, Rng& rng,
                                                         BatchStats* stats) const {
    if (datasets_.empty()) {
        fail(ErrorCode::EmptyStore, "sample_batch needs at least one checkpoint dataset");
    }
    mixture.validate();
    const int t = current_iteration();
    // Position of D_i within datasets_ (iterations are contiguous from the first one).
    const int first = datasets_.front().iteration;
    auto dataset = [&](int iteration) -> std::size_t { return static_cast<std::size_t>(iteration - first); };
    const int earliest = first;

    auto fractions = mixture.fractions();
    if (t == earliest) {
        fractions = {1.0, 0.0, 0.0};
    }
    const auto planned = apportion(batch_size, fractions);

    BatchStats local;
    local.planned = planned;
    std::vector<ComparisonTriple> batch;
    batch.reserve(batch_size);

    auto same_prompt = [&](std::size_t d, int prompt_id) -> const std::vector<std::size_t>* {
        const auto& index = by_prompt_[d];
        auto it = index.find(prompt_id);
        return it == index.end() || it->second.empty() ? nullptr : &it->second;
    };

    // The winner side is drawn once; only the loser is redrawn when it
    // repeats the winner's tokens, so every drawn winner keeps its weight.
    constexpr int kMaxRedraws = 10;
    auto draw = [&](std::size_t category) -> std::optional<ComparisonTriple> {
        const Prompt* prompt = nullptr;
        const Completion* winner = nullptr;
        SourceTag winner_tag = SourceTag::expert();
        int loser_iteration = t;
        if (category == 0 || category == 1) {
            const Demonstration& demo = pick(expert_, rng);
            prompt = &demo.prompt;
            winner = &demo.completion;
            if (category == 1) {
                loser_iteration = earliest + static_cast<int>(rng.below(static_cast<std::size_t>(t - earliest)));
            }
        } else {
            // Uniform over ordered pairs (i, j) with earliest <= j < i <= t.
            const std::size_t span = static_cast<std::size_t>(t - earliest);
            std::size_t k = rng.below(span * (span + 1) / 2);
            std::size_t i = 1;
            while (k >= i) {
                k -= i;
                ++i;
            }
            const int wi = earliest + static_cast<int>(i);
            loser_iteration = earliest + static_cast<int>(k);
            const auto& samples = datasets_[dataset(wi)].samples;
            if (samples.empty()) {
                return std::nullopt;
            }
            const SampledCompletion& w = pick(samples, rng);
            prompt = &w.prompt;
            winner = &w.completion;
            winner_tag = SourceTag::checkpoint(wi);
        }
        const std::size_t d = dataset(loser_iteration);
        const auto* candidates = same_prompt(d, prompt->id);
        if (candidates == nullptr) {
            return std::nullopt;
        }
        const PairCategory kind = category == 0   ? PairCategory::Online
                                  : category == 1 ? PairCategory::Replay
                                                  : PairCategory::Intermodel;
        for (int attempt = 0; attempt <= kMaxRedraws; ++attempt) {
            if (attempt > 0) {
                ++local.redraws;
            }
            const Completion& loser = datasets_[d].samples[pick(*candidates, rng)].completion;
            if (auto triple = make_triple(*prompt, *winner, loser, winner_tag,
                                          SourceTag::checkpoint(loser_iteration), kind, t)) {
                return triple;
            }
        }
        return std::nullopt;
    };

    for (std::size_t category = 0; category < 3; ++category) {
        for (std::size_t n = 0; n < planned[category]; ++n) {
            if (auto triple = draw(category)) {
                ++local.emitted[category];
                batch.push_back(std::move(*triple));
            } else {
                ++local.skipped;
            }
        }
    }
    if (stats != nullptr) {
        *stats = local;
    }
    return batch;
}

StoreReport validate(const RankingStore& store, std::span<const ComparisonTriple> triples) {
    StoreReport report;
    for (std::size_t i = 0; i < triples.size(); ++i) {
        if (auto bad = check_triple(triples[i])) {
            report.violations.push_back({i, *bad});
        }
    }
    for (const auto& ds : store.datasets()) {
        report.dataset_sizes.emplace_back(ds.iteration, ds.samples.size());
        report.expert_duplicates += ds.expert_duplicates;
    }
    report.skipped_pairs = store.skipped();
    return report;
}

}  // namespace demoalign

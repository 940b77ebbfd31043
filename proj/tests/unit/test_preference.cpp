// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "demoalign/error.h"
#include "demoalign/preference.h"
#include "fixtures.h"

using namespace demoalign;
using fixtures::seq;

namespace {

const MixtureConfig kDefaultMix;

std::vector<Demonstration> two_prompt_demos() {
    return {{{0, {0}}, seq({2, 2})}, {{1, {1}}, seq({2, 0})}};
}

// Every sample differs from the expert completions and from other iterations.
std::vector<SampledCompletion> samples_for(int iteration, std::size_t per_prompt) {
    std::vector<SampledCompletion> out;
    for (int id = 0; id < 2; ++id) {
        for (std::size_t k = 0; k < per_prompt; ++k) {
            out.push_back({{id, {static_cast<TokenId>(id)}},
                           seq({static_cast<TokenId>(iteration % 2), static_cast<TokenId>(k % 2), 1})});
        }
    }
    return out;
}

RankingStore store_with(int iterations, std::size_t per_prompt = 10) {
    RankingStore store(two_prompt_demos());
    for (int t = 0; t < iterations; ++t) {
        store.add_checkpoint_dataset(t, samples_for(t, per_prompt));
    }
    return store;
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected a demoalign::Error");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("apportionment") {
    using A = std::array<std::size_t, 3>;
    CHECK(apportion(10, kDefaultMix.fractions()) == A{7, 2, 1});
    CHECK(apportion(24, kDefaultMix.fractions()) == A{17, 5, 2});
    CHECK(apportion(10, {1.0, 0.0, 0.0}) == A{10, 0, 0});
    CHECK(apportion(0, kDefaultMix.fractions()) == A{0, 0, 0});
    CHECK(apportion(3, {1.0 / 3, 1.0 / 3, 1.0 / 3}) == A{1, 1, 1});
    for (std::size_t n = 1; n <= 1000; ++n) {
        const auto c = apportion(n, kDefaultMix.fractions());
        CHECK(c[0] + c[1] + c[2] == n);
        const auto f = kDefaultMix.fractions();
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(std::abs(static_cast<double>(c[i]) - f[i] * static_cast<double>(n)) < 1.0);
        }
    }
}

TEST_CASE("mixture validation names the fields") {
    MixtureConfig m;
    CHECK_NOTHROW(m.validate());
    m.frac_online = 0.8;
    try {
        m.validate();
        FAIL("expected ConfigError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ConfigError);
        CHECK(std::string(e.what()).find("mixture.frac_") != std::string::npos);
    }
    m = MixtureConfig{1.2, -0.1, -0.1};
    CHECK(code_of([&] { m.validate(); }) == ErrorCode::ConfigError);
}

TEST_CASE("checkpoint datasets follow iteration order") {
    RankingStore store(two_prompt_demos());
    CHECK(store.current_iteration() == -1);
    CHECK(code_of([&] { store.add_checkpoint_dataset(1, samples_for(1, 2)); }) ==
          ErrorCode::IterationOrderViolation);
    store.add_checkpoint_dataset(0, samples_for(0, 2));
    store.add_checkpoint_dataset(0, samples_for(0, 3));  // appends to D_0
    CHECK(store.datasets().size() == 1);
    CHECK(store.datasets()[0].samples.size() == 10);
    store.add_checkpoint_dataset(1, samples_for(1, 2));
    CHECK(store.current_iteration() == 1);
    CHECK(code_of([&] { store.add_checkpoint_dataset(5, samples_for(5, 2)); }) ==
          ErrorCode::IterationOrderViolation);
    CHECK(code_of([&] { store.add_checkpoint_dataset(0, samples_for(0, 2)); }) ==
          ErrorCode::IterationOrderViolation);

    SUBCASE("expert duplicates are counted") {
        store.add_checkpoint_dataset(2, {{{0, {0}}, seq({2, 2})}, {{0, {0}}, seq({2, 1})}});
        CHECK(store.datasets().back().expert_duplicates == 1);
        CHECK(validate(store).expert_duplicates == 1);
    }
    SUBCASE("empty store cannot be sampled") {
        RankingStore fresh(two_prompt_demos());
        Rng rng(1);
        CHECK(code_of([&] { fresh.sample_batch(4, kDefaultMix, rng); }) == ErrorCode::EmptyStore);
    }
}

TEST_CASE("batch sampling") {
    Rng rng(11);
    SUBCASE("first iteration is all online") {
        const RankingStore store = store_with(1);
        BatchStats stats;
        const auto batch = store.sample_batch(24, kDefaultMix, rng, &stats);
        CHECK(batch.size() == 24);
        CHECK(stats.planned == std::array<std::size_t, 3>{24, 0, 0});
        for (const auto& tr : batch) {
            CHECK(tr.category == PairCategory::Online);
            CHECK(tr.winner_source == SourceTag::expert());
            CHECK(tr.loser_source == SourceTag::checkpoint(0));
        }
    }
    SUBCASE("later iterations respect ranking, category and prompt") {
        const RankingStore store = store_with(4);
        for (int rep = 0; rep < 50; ++rep) {
            BatchStats stats;
            const auto batch = store.sample_batch(24, kDefaultMix, rng, &stats);
            CHECK(stats.planned == std::array<std::size_t, 3>{17, 5, 2});
            CHECK(stats.emitted == stats.planned);
            CHECK(validate(store, batch).violations.empty());
            for (const auto& tr : batch) {
                CHECK(outranks(tr.winner_source, tr.loser_source));
                CHECK_FALSE(check_triple(tr, 3).has_value());
                switch (tr.category) {
                case PairCategory::Online:
                    CHECK(tr.loser_source == SourceTag::checkpoint(3));
                    break;
                case PairCategory::Replay:
                    CHECK(*tr.loser_source.iteration < 3);
                    break;
                default:
                    CHECK(tr.winner_source.kind == SourceKind::Checkpoint);
                }
                // Both sides come from the same prompt.
                const int id = tr.prompt.id;
                const auto& demos = store.expert();
                const bool winner_ok =
                    tr.winner_source.kind == SourceKind::Expert
                        ? std::any_of(demos.begin(), demos.end(),
                                      [&](const Demonstration& d) {
                                          return d.prompt.id == id && d.completion == tr.winner;
                                      })
                        : true;
                CHECK(winner_ok);
                CHECK(tr.prompt.tokens == TokenSeq{static_cast<TokenId>(id)});
            }
        }
    }
    SUBCASE("intermodel pairs are uniform over ordered checkpoint pairs") {
        const RankingStore store = store_with(3);
        std::map<std::pair<int, int>, int> counts;
        const MixtureConfig only_inter{0.0, 0.0, 1.0};
        const int n = 6000;
        for (const auto& tr : store.sample_batch(n, only_inter, rng)) {
            ++counts[{*tr.winner_source.iteration, *tr.loser_source.iteration}];
        }
        CHECK(counts.size() == 3);
        for (const auto& [pair, c] : counts) {
            CHECK(pair.first > pair.second);
            const double p = 1.0 / 3.0;
            CHECK(std::abs(c / static_cast<double>(n) - p) < 4.0 * std::sqrt(p * (1 - p) / n));
        }
    }
    SUBCASE("sampling does not mutate the store and is seed-deterministic") {
        const RankingStore store = store_with(3);
        const auto sizes = validate(store).dataset_sizes;
        Rng a(5);
        Rng b(5);
        CHECK(store.sample_batch(24, kDefaultMix, a) == store.sample_batch(24, kDefaultMix, b));
        CHECK(validate(store).dataset_sizes == sizes);
    }
}

TEST_CASE("identical losers are redrawn then skipped") {
    // Prompt 0 only ever samples the expert completion; prompt 1 is clean.
    RankingStore store({{{0, {0}}, seq({2, 2})}});
    store.add_checkpoint_dataset(0, {{{0, {0}}, seq({2, 2})}, {{0, {0}}, seq({2, 2})}});
    Rng rng(3);
    BatchStats stats;
    const auto batch = store.sample_batch(5, kDefaultMix, rng, &stats);
    CHECK(batch.empty());
    CHECK(stats.skipped == 5);
    CHECK(stats.redraws == 5 * 10);

    SUBCASE("one distinct loser is eventually found") {
        RankingStore mixed({{{0, {0}}, seq({2, 2})}});
        std::vector<SampledCompletion> s(9, {{0, {0}}, seq({2, 2})});
        s.push_back({{0, {0}}, seq({1})});
        mixed.add_checkpoint_dataset(0, s);
        BatchStats st;
        const auto b2 = mixed.sample_batch(200, kDefaultMix, rng, &st);
        // P(skip) = 0.9^11 ~ 0.31 per pair.
        CHECK(st.emitted[0] + st.skipped == 200);
        CHECK(st.skipped > 30);
        CHECK(st.skipped < 100);
        for (const auto& tr : b2) {
            CHECK(tr.loser == seq({1}));
        }
    }
}

TEST_CASE("store report") {
    RankingStore store = store_with(4, 5);  // 10 samples per dataset over two prompts
    const auto report = validate(store);
    REQUIRE(report.dataset_sizes.size() == 4);
    for (int t = 0; t < 4; ++t) {
        CHECK(report.dataset_sizes[static_cast<std::size_t>(t)] == std::pair<int, std::size_t>{t, 10});
    }
    store.note_skipped(3);
    CHECK(validate(store).skipped_pairs == 3);

    Rng rng(2);
    auto batch = store.sample_batch(10, kDefaultMix, rng);
    REQUIRE(!batch.empty());
    std::swap(batch[0].winner_source, batch[0].loser_source);
    const auto bad = validate(store, batch);
    REQUIRE(bad.violations.size() == 1);
    CHECK(bad.violations[0].index == 0);
    CHECK_FALSE(bad.violations[0].reason.empty());
}

TEST_CASE("dataset sizes stay within M times N") {
    // M = 10 samples per demonstration, N = 7 demonstrations.
    std::vector<Demonstration> demos;
    for (int i = 0; i < 7; ++i) {
        demos.push_back({{i, {0}}, seq({1, 1})});
    }
    RankingStore store(demos);
    Rng rng(9);
    for (int t = 0; t < 4; ++t) {
        std::vector<SampledCompletion> samples;
        for (const auto& d : demos) {
            for (int k = 0; k < 10; ++k) {
                samples.push_back({d.prompt, seq({static_cast<TokenId>(rng.below(2)), 0})});
            }
        }
        store.add_checkpoint_dataset(t, samples);
    }
    for (const auto& [t, size] : validate(store).dataset_sizes) {
        CHECK(size <= 70);
    }
}

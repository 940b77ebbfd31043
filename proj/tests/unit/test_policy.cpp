// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "demoalign/autoregressive_policy.h"
#include "demoalign/error.h"
#include "demoalign/policy.h"
#include "demoalign/tabular_policy.h"
#include "fixtures.h"
#include "gradcheck.h"

using namespace demoalign;
using fixtures::seq;

namespace {

double total_mass(const Policy& p, const Prompt& x) {
    double total = 0.0;
    for (const auto& y : p.completion_space(x, kDefaultEnumerationCap)) {
        total += std::exp(p.logprob(x, y));
    }
    return total;
}

}  // namespace

TEST_CASE("tabular logprob") {
    const Prompt x{0, {0}};
    const std::vector<Completion> ys = all_sequences(2, 2, 2);
    REQUIRE(ys.size() == 4);
    TabularPolicy uniform = TabularPolicy::uniform({x}, ys, 2);
    for (const auto& y : ys) {
        CHECK(std::abs(uniform.logprob(x, y) - std::log(0.25)) < 1e-15);
    }

    TabularPolicy peaked = uniform;
    const double logits[] = {0.0, 30.0, 0.0, 0.0};
    peaked.set_logits(0, logits);
    CHECK(std::abs(peaked.logprob(x, ys[1])) < 1e-12);
    CHECK(std::abs(total_mass(peaked, x) - 1.0) < 1e-12);

    CHECK_THROWS_AS(uniform.logprob(x, seq({0, 0, 0})), Error);
    try {
        uniform.logprob(x, seq({0, 0, 0}));
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::LengthExceeded);
    }
}

TEST_CASE("tabular rows are normalized on random instances") {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const TabularPolicy p = fixtures::random_tabular(rng, 3, 2 + rng.below(30), 4.0);
        for (int id : p.prompt_ids()) {
            const Prompt x{id, {static_cast<TokenId>(id % 2)}};
            CHECK(std::abs(total_mass(p, x) - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("autoregressive policy normalizes over its completion space") {
    AutoregressiveShape shape;
    shape.vocab_size = 3;
    shape.context = 4;
    shape.max_length = 2;
    const Prompt x{0, {0, 2}};
    SUBCASE("fixed length: all nine completions") {
        const AutoregressivePolicy p(shape, 11);
        const auto space = p.completion_space(x, kDefaultEnumerationCap);
        CHECK(space.size() == 9);
        CHECK(std::abs(total_mass(p, x) - 1.0) < 1e-9);
    }
    SUBCASE("with an end token") {
        shape.end_token = true;
        const AutoregressivePolicy p(shape, 12);
        CHECK(p.completion_space(x, kDefaultEnumerationCap).size() == 3 + 9);
        CHECK(std::abs(total_mass(p, x) - 1.0) < 1e-9);
    }
    SUBCASE("per-step distributions sum to one and logprob is their sum") {
        const AutoregressivePolicy p(shape, 13);
        const Completion y = seq({2, 1});
        double by_steps = 0.0;
        TokenSeq prefix;
        for (TokenId t : y.tokens) {
            const auto step = p.next_token_logprobs(x, prefix);
            double mass = 0.0;
            for (double lp : step) {
                mass += std::isinf(lp) ? 0.0 : std::exp(lp);
            }
            CHECK(std::abs(mass - 1.0) < 1e-9);
            by_steps += step[static_cast<std::size_t>(t)];
            prefix.push_back(t);
        }
        CHECK(std::abs(by_steps - p.logprob(x, y)) < 1e-12);
    }
    SUBCASE("shape limits") {
        AutoregressiveShape big = shape;
        big.vocab_size = 65;
        CHECK_THROWS_AS(AutoregressivePolicy(big, 1), Error);
        big = shape;
        big.hidden_dim = 4000;
        CHECK_THROWS_AS(AutoregressivePolicy(big, 1), Error);
    }
}

TEST_CASE("sampling") {
    fixtures::Bandit2 b;
    SUBCASE("point mass repeats the mode") {
        Rng rng(1);
        const auto ys = sample_completions(b.point_mass(1), b.x, 5, 1.0, rng);
        CHECK(ys.size() == 5);
        for (const auto& y : ys) {
            CHECK(y == b.ys[1]);
        }
    }
    SUBCASE("uniform frequencies concentrate at 4 sigma") {
        Rng rng(2);
        const auto ys = sample_completions(b.uniform(), b.x, 10000, 1.0, rng);
        const double first = static_cast<double>(std::count(ys.begin(), ys.end(), b.ys[0])) / 10000.0;
        CHECK(std::abs(first - 0.5) < 0.02);
    }
    SUBCASE("temperature scales logits before the softmax") {
        Rng rng(3);
        const TabularPolicy p = b.policy(std::exp(1.0) / (std::exp(1.0) + 1.0));  // logits (1, 0)
        const auto ys = sample_completions(p, b.x, 20000, 0.5, rng);
        const double expected = std::exp(2.0) / (std::exp(2.0) + 1.0);
        const double sigma = std::sqrt(expected * (1.0 - expected) / 20000.0);
        const double first = static_cast<double>(std::count(ys.begin(), ys.end(), b.ys[0])) / 20000.0;
        CHECK(std::abs(first - expected) < 4.0 * sigma);
    }
    SUBCASE("same seed, same samples") {
        Rng r1(9);
        Rng r2(9);
        Rng arng(4);
        const auto ar = fixtures::random_autoregressive(arng, true);
        const Prompt x{0, {0, 1, 0}};
        CHECK(sample_completions(ar, x, 50, 1.0, r1) == sample_completions(ar, x, 50, 1.0, r2));
    }
    SUBCASE("autoregressive sample frequencies follow logprob") {
        Rng arng(5);
        AutoregressiveShape shape;
        shape.vocab_size = 2;
        shape.context = 3;
        shape.max_length = 2;
        const AutoregressivePolicy ar(shape, 21, 1.5);
        const Prompt x{0, {1}};
        Rng rng(6);
        const std::size_t n = 40000;
        std::map<TokenSeq, double> freq;
        for (const auto& y : ar.sample(x, n, 1.0, rng)) {
            freq[y.tokens] += 1.0 / static_cast<double>(n);
        }
        for (const auto& y : ar.completion_space(x, kDefaultEnumerationCap)) {
            const double p = std::exp(ar.logprob(x, y));
            CHECK(std::abs(freq[y.tokens] - p) < 4.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n)) + 1e-12);
        }
    }
}

TEST_CASE("tabular gradient at uniform") {
    fixtures::Bandit2 b;
    const auto g = grad_logprob(b.uniform(), b.x, b.ys[0]);
    REQUIRE(g.size() == 2);
    CHECK(std::abs(g[0] - 0.5) < 1e-15);
    CHECK(std::abs(g[1] + 0.5) < 1e-15);
}

TEST_CASE("grad_logprob matches finite differences") {
    Rng rng(2024);
    SUBCASE("tabular, 50 instances") {
        for (int i = 0; i < 50; ++i) {
            TabularPolicy p = fixtures::random_tabular(rng, 1 + rng.below(3), 2 + rng.below(20));
            const int id = p.prompt_ids()[rng.below(p.prompt_ids().size())];
            const Prompt x{id, {static_cast<TokenId>(id % 2)}};
            const Completion y = p.completions(id)[rng.below(p.completions(id).size())];
            const auto analytic = grad_logprob(p, x, y);
            const auto numeric = gradcheck::central_difference(p, [&] { return p.logprob(x, y); });
            CHECK(gradcheck::relative_error(analytic, numeric) < 1e-5);
        }
    }
    SUBCASE("autoregressive, 50 instances") {
        for (int i = 0; i < 50; ++i) {
            AutoregressivePolicy p = fixtures::random_autoregressive(rng, i % 2 == 0);
            const Prompt x = fixtures::random_prompt(rng, 0, p.shape().vocab_size, 1 + static_cast<int>(rng.below(3)));
            const auto space = p.completion_space(x, kDefaultEnumerationCap);
            const Completion y = space[rng.below(space.size())];
            const auto analytic = grad_logprob(p, x, y);
            const auto numeric = gradcheck::central_difference(p, [&] { return p.logprob(x, y); });
            CHECK(gradcheck::relative_error(analytic, numeric) < 1e-3);
        }
    }
}

TEST_CASE("snapshots") {
    Rng rng(8);
    TabularPolicy live = fixtures::random_tabular(rng, 2, 6);
    const PolicySnapshot snap = snapshot(live, 3);
    CHECK(snap.iteration() == 3);
    CHECK(snap.kind() == PolicyKind::Tabular);
    CHECK(snap.parameters() == live.parameters());

    SUBCASE("isolation from later updates") {
        const auto before = snap.fingerprint();
        const auto g = grad_logprob(live, {0, {0}}, live.completions(0)[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
            live.parameters().values()[i] += 0.1 * g[i];
        }
        CHECK(snap.fingerprint() == before);
        CHECK(live.parameters().fingerprint() != before);
    }
    SUBCASE("snapshot of a restored policy is bit-identical") {
        const auto restored = restore(snap);
        CHECK(snapshot(*restored, 3).parameters() == snap.parameters());
    }
    SUBCASE("sampling from a snapshot is reproducible") {
        Rng r1(5);
        Rng r2(5);
        const Prompt x{1, {1}};
        CHECK(snap.policy().sample(x, 20, 1.0, r1) == snap.policy().sample(x, 20, 1.0, r2));
    }
    SUBCASE("checkpoint files round trip both policy kinds") {
        fixtures::TempDir dir("ckpt");
        save_checkpoint(snap, dir / "tab.ckpt");
        const PolicySnapshot back = load_checkpoint(dir / "tab.ckpt");
        CHECK(back.iteration() == 3);
        CHECK(back.parameters() == snap.parameters());
        CHECK(back.policy().architecture() == snap.policy().architecture());

        Rng arng(10);
        const auto ar = fixtures::random_autoregressive(arng, true);
        save_checkpoint(snapshot(ar, 1), dir / "ar.ckpt");
        const PolicySnapshot ar_back = load_checkpoint(dir / "ar.ckpt");
        CHECK(ar_back.parameters() == ar.parameters());
        const Prompt x{0, {1, 0}};
        const Completion y = ar.completion_space(x, kDefaultEnumerationCap).back();
        CHECK(ar_back.policy().logprob(x, y) == ar.logprob(x, y));

        std::string bytes = fixtures::read_file(dir / "ar.ckpt");
        bytes[8] = 99;
        std::ofstream(dir / "ar.ckpt", std::ios::binary) << bytes;
        CHECK_THROWS_AS(load_checkpoint(dir / "ar.ckpt"), Error);
    }
}

TEST_CASE("parameter vectors track finiteness and layout") {
    ParameterVector v;
    CHECK(v.add_block("w", 3) == 0);
    CHECK(v.add_block("b", 2) == 3);
    CHECK(v.size() == 5);
    CHECK(v.block("b").size() == 2);
    CHECK(v.all_finite());
    v.values()[4] = std::nan("");
    CHECK_FALSE(v.all_finite());
}

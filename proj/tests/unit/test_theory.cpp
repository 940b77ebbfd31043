// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "demoalign/theory.h"
#include "fixtures.h"

using namespace demoalign;

namespace {

double two_term_kl(double a1, double b1) {
    return a1 * std::log(a1 / b1) + (1.0 - a1) * std::log((1.0 - a1) / (1.0 - b1));
}

double softplus_ref(double x) { return std::log1p(std::exp(x)); }

}  // namespace

TEST_CASE("value decomposition") {
    fixtures::Bandit2 b;
    for (double p1 : {0.05, 0.5, 0.9}) {
        const TheoremReport r = check_value_decomposition(b.policy(p1), b.uniform(), b.reward, b.task);
        CHECK(r.pass);
        CHECK(r.relation == "==");
        CHECK(r.residual() < 1e-12);
    }
    SUBCASE("a flipped divergence sign is caught") {
        const KlFn flipped = [](const Policy& a, const Policy& c, const Prompt& x) { return -kl(a, c, x); };
        const TheoremReport r = check_value_decomposition(b.policy(0.2), b.uniform(), b.reward, b.task, flipped);
        CHECK_FALSE(r.pass);
        const SweepSummary s = sweep_value_decomposition(100, kDecompositionSeed, flipped);
        CHECK(s.failures > 0);
        REQUIRE(s.first_failure.has_value());
        CHECK_FALSE(s.first_failure->pass);
    }
}

TEST_CASE("improvement over the reference") {
    fixtures::Bandit2 b;
    const TheoremReport r = check_improvement(b.uniform(), b.reward, b.task);
    CHECK(r.pass);
    CHECK(r.relation == ">");
    CHECK(std::abs(r.lhs - std::log((std::exp(1.0) + 1.0) / 2.0)) < 1e-12);
    CHECK(std::abs(r.rhs - 0.5) < 1e-12);

    fixtures::Bandit2 flat(0.3, 0.3, 1.0);
    const TheoremReport eq = check_improvement(flat.uniform(), flat.reward, flat.task);
    CHECK(eq.pass);
    CHECK(eq.relation == "==");
}

TEST_CASE("extrapolation implication") {
    // alpha = 0.1, demos average 0.75, pi_hat puts 0.99 on the better arm.
    fixtures::Bandit2 b(1.0, 0.0, 0.1);
    const std::vector<Demonstration> demos = {{b.x, b.ys[0]}, {b.x, b.ys[0]}, {b.x, b.ys[0]}, {b.x, b.ys[1]}};
    const TheoremReport r = check_extrapolation(b.policy(0.99), b.uniform(), demos, b.reward, b.task);

    const double e10 = std::exp(10.0);
    const double v_star = 0.1 * std::log((e10 + 1.0) / 2.0);
    const double cond_lhs = v_star - 0.75;
    const double cond_rhs = 0.1 * (two_term_kl(0.99, e10 / (e10 + 1.0)) - two_term_kl(0.99, 0.5));
    CHECK(std::abs(cond_lhs - 0.1807) < 5e-5);
    CHECK(std::abs(cond_rhs + 0.0593) < 5e-5);

    REQUIRE(r.condition_lhs.has_value());
    CHECK(std::abs(*r.condition_lhs - cond_lhs) < 1e-12);
    CHECK(std::abs(*r.condition_rhs - cond_rhs) < 1e-12);
    CHECK(*r.condition_holds);
    CHECK(*r.extrapolated);
    CHECK(r.lhs == doctest::Approx(0.99));
    CHECK(r.rhs == 0.75);
    CHECK(r.pass);

    SUBCASE("condition false passes vacuously") {
        const std::vector<Demonstration> perfect(4, {b.x, b.ys[0]});
        const TheoremReport v = check_extrapolation(b.policy(0.6), b.uniform(), perfect, b.reward, b.task);
        CHECK_FALSE(*v.condition_holds);
        CHECK_FALSE(*v.extrapolated);
        CHECK(v.pass);
    }
    SUBCASE("report serializes the condition") {
        const auto j = r.to_json();
        CHECK(j.at("relation") == "implies");
        CHECK(j.contains("condition_lhs"));
    }
}

TEST_CASE("jensen bound") {
    fixtures::Bandit2 b;
    const RewardFn& reward = b.reward.function();
    // Exact enumeration over the four (winner, loser) pairs.
    const double w[] = {0.7, 0.3};
    const double l[] = {0.4, 0.6};
    const double r[] = {1.0, 0.0};
    const double lhs = softplus_ref(-((w[0] * r[0] + w[1] * r[1]) - (l[0] * r[0] + l[1] * r[1])));
    double rhs = 0.0;
    for (int i = 0; i < 2; ++i) {
        for (int k = 0; k < 2; ++k) {
            rhs += w[i] * l[k] * softplus_ref(-(r[i] - r[k]));
        }
    }
    const TheoremReport exact = check_jensen_bound(b.policy(0.7), b.policy(0.4), reward, b.task);
    CHECK(exact.pass);
    CHECK(std::abs(exact.lhs - lhs) < 1e-12);
    CHECK(std::abs(exact.rhs - rhs) < 1e-12);
    CHECK(lhs <= rhs);

    JensenOptions mc;
    mc.exact_when_feasible = false;
    mc.sample_count = 20000;
    mc.seed = 3;
    const TheoremReport sampled = check_jensen_bound(b.policy(0.7), b.policy(0.4), reward, b.task, mc);
    CHECK(sampled.pass);
    CHECK(std::abs(sampled.rhs - rhs) < 0.02);
}

TEST_CASE("theory sweeps") {
    const VerificationReport report = verify_theory();
    REQUIRE(report.sweeps.size() == 4);
    const std::size_t expected[] = {100, 100, 1000, 200};
    const std::uint64_t seeds[] = {kDecompositionSeed, kImprovementSeed, kExtrapolationSeed, kJensenSeed};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(report.sweeps[i].instances == expected[i]);
        CHECK(report.sweeps[i].seed == seeds[i]);
        CHECK(report.sweeps[i].failures == 0);
    }
    CHECK(report.all_pass());
    CHECK(report.seconds < 60.0);
    const auto j = report.to_json();
    CHECK(j.at("sweeps").size() == 4);

    // Same seed, same summary.
    const SweepSummary a = sweep_jensen(20, 5);
    const SweepSummary c = sweep_jensen(20, 5);
    CHECK(a.max_residual == c.max_residual);
}

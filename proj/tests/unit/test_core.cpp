// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "demoalign/core.h"
#include "demoalign/error.h"
#include "demoalign/serialization.h"
#include "fixtures.h"

using namespace demoalign;
using fixtures::seq;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected a demoalign::Error");
    return ErrorCode::InvalidArgument;
}

template <typename F>
std::string message_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    FAIL("expected a demoalign::Error");
    return {};
}

ComparisonTriple online(int prompt, TokenSeq w, TokenSeq l, int t) {
    return *make_triple({prompt, {0}}, seq(std::move(w)), seq(std::move(l)), SourceTag::expert(),
                        SourceTag::checkpoint(t), PairCategory::Online, t);
}

}  // namespace

TEST_CASE("vocabulary is a bijection onto its index range") {
    const Vocabulary v({"x", "yy", "z"});
    CHECK(v.size() == 3);
    for (TokenId i = 0; i < 3; ++i) {
        CHECK(v.index_of(v.token(i)) == i);
    }
    CHECK(v.render({0, 1, 2}) == "x yy z");
    CHECK(code_of([] { Vocabulary({"a", "a"}); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { Vocabulary({"a"}); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { Vocabulary({"a", ""}); }) == ErrorCode::InvalidArgument);
    CHECK(message_of([&] { v.index_of("q"); }).find("'q'") != std::string::npos);
}

TEST_CASE("task spec validates prompt weights and ids") {
    TaskSpec task = make_task(fixtures::letters(2), {{0, {0}}, {1, {1}}}, 2);
    CHECK(task.weights == std::vector<double>{0.5, 0.5});
    task.weights = {0.5, 0.6};
    CHECK(code_of([&] { task.validate(); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { make_task(fixtures::letters(2), {{0, {0}}, {0, {1}}}, 2); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { make_task(fixtures::letters(2), {{0, {5}}}, 2); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("load_demonstrations") {
    fixtures::TempDir dir("core");
    const TaskSpec task = make_task(fixtures::letters(3), {{0, {0, 1}}, {1, {2}}}, 3);

    SUBCASE("seven records keep file order") {
        std::string body;
        for (int i = 0; i < 7; ++i) {
            body += R"({"prompt_id": 0, "prompt": ["a", "b"], "completion": [")" +
                    std::string(1, static_cast<char>('a' + i % 3)) + "\"]}\n";
        }
        const auto demos = load_demonstrations(dir.write("seven.jsonl", body), task);
        REQUIRE(demos.size() == 7);
        for (int i = 0; i < 7; ++i) {
            CHECK(demos[static_cast<std::size_t>(i)].completion.tokens == TokenSeq{i % 3});
        }
    }
    SUBCASE("symbol outside the vocabulary is named") {
        const auto path = dir.write("bad.jsonl", R"({"prompt_id": 0, "prompt": ["a", "b"], "completion": ["q"]})");
        CHECK(code_of([&] { load_demonstrations(path, task); }) == ErrorCode::UnknownToken);
        CHECK(message_of([&] { load_demonstrations(path, task); }).find("'q'") != std::string::npos);
    }
    SUBCASE("four records over two prompts match a hand-built fixture") {
        const auto path = dir.write("four.jsonl",
                                    "{\"prompt_id\": 0, \"prompt\": [\"a\", \"b\"], \"completion\": [\"c\"]}\n"
                                    "{\"prompt_id\": 1, \"prompt\": [\"c\"], \"completion\": [\"a\", \"a\", \"b\"]}\n"
                                    "{\"prompt_id\": 0, \"prompt\": [\"a\", \"b\"], \"completion\": [\"b\", \"c\"]}\n"
                                    "{\"prompt_id\": 1, \"prompt\": [\"c\"], \"completion\": [\"b\"]}\n");
        const std::vector<Demonstration> expected = {
            {{0, {0, 1}}, {{2}, true}},
            {{1, {2}}, {{0, 0, 1}, false}},
            {{0, {0, 1}}, {{1, 2}, true}},
            {{1, {2}}, {{1}, true}},
        };
        const auto demos = load_demonstrations(path, task);
        CHECK(demos == expected);
        std::size_t by_prompt[2] = {0, 0};
        for (const auto& d : demos) {
            ++by_prompt[d.prompt.id];
        }
        CHECK(by_prompt[0] == 2);
        CHECK(by_prompt[1] == 2);
    }
    SUBCASE("malformed line reports its number") {
        const auto path = dir.write("broken.jsonl",
                                    "{\"prompt_id\": 0, \"prompt\": [\"a\", \"b\"], \"completion\": [\"c\"]}\n{oops\n");
        CHECK(code_of([&] { load_demonstrations(path, task); }) == ErrorCode::ParseError);
        CHECK(message_of([&] { load_demonstrations(path, task); }).find("line 2") != std::string::npos);
    }
    SUBCASE("empty file") {
        CHECK(code_of([&] { load_demonstrations(dir.write("empty.jsonl", "\n"), task); }) == ErrorCode::EmptyFile);
    }
    SUBCASE("overlong completion") {
        const auto path = dir.write("long.jsonl", R"({"prompt_id": 1, "prompt": ["c"], "completion": ["a","a","a","a"]})");
        CHECK(code_of([&] { load_demonstrations(path, task); }) == ErrorCode::LengthExceeded);
    }
}

TEST_CASE("triple construction enforces the ranking") {
    CHECK_FALSE(make_triple({0, {0}}, seq({1}), seq({1}), SourceTag::expert(), SourceTag::checkpoint(0),
                            PairCategory::Online)
                    .has_value());
    CHECK(code_of([] {
              make_triple({0, {0}}, seq({1}), seq({0}), SourceTag::checkpoint(0), SourceTag::expert(),
                          PairCategory::Online);
          }) == ErrorCode::OrderingViolation);
    CHECK(code_of([] {
              make_triple({0, {0}}, seq({1}), seq({0}), SourceTag::checkpoint(1), SourceTag::checkpoint(2),
                          PairCategory::Intermodel);
          }) == ErrorCode::OrderingViolation);
    CHECK(code_of([] {
              make_triple({0, {0}}, seq({1}), seq({0}), SourceTag::expert(), SourceTag::checkpoint(1),
                          PairCategory::Replay, 1);
          }) == ErrorCode::OrderingViolation);
    CHECK(make_triple({0, {0}}, seq({1}), seq({0}), SourceTag::checkpoint(2), SourceTag::checkpoint(0),
                      PairCategory::Intermodel, 2)
              .has_value());
    CHECK(outranks(SourceTag::expert(), SourceTag::checkpoint(7)));
    CHECK(outranks(SourceTag::checkpoint(3), SourceTag::checkpoint(2)));
    CHECK_FALSE(outranks(SourceTag::checkpoint(2), SourceTag::checkpoint(2)));
}

TEST_CASE("dataset round trip") {
    fixtures::TempDir dir("dataset");
    SUBCASE("empty list") {
        save_dataset({}, dir / "empty.bin");
        CHECK(std::filesystem::file_size(dir / "empty.bin") >= 16);
        CHECK(load_dataset(dir / "empty.bin").empty());
    }
    SUBCASE("mixed categories") {
        const std::vector<ComparisonTriple> triples = {
            online(0, {1, 2}, {2}, 1),
            *make_triple({3, {1}}, seq({0}), seq({1, 1}, true), SourceTag::expert(), SourceTag::checkpoint(0),
                         PairCategory::Replay, 1),
            *make_triple({4, {0, 0}}, seq({2}), seq({1}), SourceTag::checkpoint(1), SourceTag::checkpoint(0),
                         PairCategory::Intermodel, 1),
        };
        save_dataset(triples, dir / "three.bin");
        CHECK(load_dataset(dir / "three.bin") == triples);
    }
    SUBCASE("corrupted header") {
        const std::vector<ComparisonTriple> one = {online(0, {1}, {0}, 0)};
        save_dataset(one, dir / "one.bin");
        std::string bytes = fixtures::read_file(dir / "one.bin");
        bytes[9] ^= 0x7f;
        std::ofstream(dir / "one.bin", std::ios::binary) << bytes;
        CHECK(code_of([&] { load_dataset(dir / "one.bin"); }) == ErrorCode::VersionMismatch);
    }
    SUBCASE("random triples round trip") {
        Rng rng(17);
        std::vector<ComparisonTriple> triples;
        for (int i = 0; i < 200; ++i) {
            const int len = 1 + static_cast<int>(rng.below(4));
            Prompt x = fixtures::random_prompt(rng, static_cast<int>(rng.below(1000)), 5, 1 + static_cast<int>(rng.below(3)));
            Completion w = seq(fixtures::random_prompt(rng, 0, 5, len).tokens, rng.uniform() < 0.5);
            Completion l = seq(fixtures::random_prompt(rng, 0, 5, len).tokens, rng.uniform() < 0.5);
            const int t = static_cast<int>(rng.below(5));
            std::optional<ComparisonTriple> made;
            switch (rng.below(3)) {
            case 0:
                made = make_triple(x, w, l, SourceTag::expert(), SourceTag::checkpoint(t), PairCategory::Online, t);
                break;
            case 1:
                made = make_triple(x, w, l, SourceTag::expert(), SourceTag::checkpoint(t), PairCategory::Replay, t + 1);
                break;
            default:
                made = make_triple(x, w, l, SourceTag::checkpoint(t + 1), SourceTag::checkpoint(t),
                                   PairCategory::Intermodel, t + 1);
            }
            if (made) {
                triples.push_back(*made);
            }
        }
        save_dataset(triples, dir / "random.bin");
        CHECK(load_dataset(dir / "random.bin") == triples);
    }
    SUBCASE("missing file") {
        CHECK(code_of([&] { load_dataset(dir / "nope.bin"); }) == ErrorCode::IoError);
    }
}

TEST_CASE("error messages carry the code name") {
    const Error e(ErrorCode::ConfigError, "mixture.frac_online out of range");
    CHECK(std::string(e.what()) == "ConfigError: mixture.frac_online out of range");
    CHECK(e.detail() == "mixture.frac_online out of range");
}

// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Domain types shared by every module: vocabulary, prompts, completions,
// demonstrations, the task description and ranked comparison triples.

#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace demoalign {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

class Vocabulary {
public:
    Vocabulary() = default;
    /// Throws InvalidArgument on duplicates, empty symbols or fewer than two tokens.
    explicit Vocabulary(std::vector<std::string> tokens);

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    const std::string& token(TokenId id) const;
    bool contains(std::string_view symbol) const;
    /// Throws UnknownToken naming the symbol.
    TokenId index_of(std::string_view symbol) const;

    TokenSeq encode(const std::vector<std::string>& symbols) const;
    std::vector<std::string> decode(const TokenSeq& ids) const;
    /// Space-joined rendering used for judge prompts and logs.
    std::string render(const TokenSeq& ids) const;

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

struct Prompt {
    int id = 0;
    TokenSeq tokens;

    bool operator==(const Prompt&) const = default;
};

struct Completion {
    TokenSeq tokens;
    /// True when generation stopped by emitting the end token.
    bool terminated = false;

    bool operator==(const Completion&) const = default;
    auto operator<=>(const Completion&) const = default;
};

struct Demonstration {
    Prompt prompt;
    Completion completion;

    bool operator==(const Demonstration&) const = default;
};

/// Ground-truth reward r(x, y); used for verification and evaluation only.
using RewardFn = std::function<double(const Prompt&, const Completion&)>;

struct TaskSpec {
    Vocabulary vocabulary;
    std::vector<Prompt> prompts;
    /// The prompt distribution p; aligned with `prompts`.
    std::vector<double> weights;
    int max_completion_length = 1;
    RewardFn reward;

    /// Throws InvalidArgument when an invariant is broken.
    void validate() const;
    const Prompt& prompt(int id) const;
    std::optional<std::size_t> find_prompt(int id) const;
};

TaskSpec make_task(Vocabulary vocabulary, std::vector<Prompt> prompts, int max_completion_length,
                   RewardFn reward = {});

enum class SourceKind : std::uint8_t { Expert = 0, Checkpoint = 1 };

struct SourceTag {
    SourceKind kind = SourceKind::Expert;
    /// Present iff kind == Checkpoint.
    std::optional<int> iteration;

    static SourceTag expert() { return {SourceKind::Expert, std::nullopt}; }
    static SourceTag checkpoint(int t) { return {SourceKind::Checkpoint, t}; }

    bool operator==(const SourceTag&) const = default;
};

/// Strict ranking D_E > D_t > D_{t-1} > ... > D_0.
bool outranks(const SourceTag& a, const SourceTag& b);
std::string describe(const SourceTag& tag);

enum class PairCategory : std::uint8_t {
    Online = 0,
    Replay = 1,
    Intermodel = 2,
    /// Labelled by an external annotator; ordering comes from the label, not the ranking.
    Annotated = 3,
};

std::string_view to_string(PairCategory category);

struct ComparisonTriple {
    Prompt prompt;
    Completion winner;
    Completion loser;
    SourceTag winner_source;
    SourceTag loser_source;
    PairCategory category = PairCategory::Online;

    bool operator==(const ComparisonTriple&) const = default;
};

/// Empty when the triple is valid, else a description of the first broken rule.
/// When `sampling_iteration` is given the category is also checked against it.
std::optional<std::string> check_triple(const ComparisonTriple& triple,
                                        std::optional<int> sampling_iteration = std::nullopt);

/// Builds a validated triple. Returns nullopt when winner and loser share a
/// token sequence; throws OrderingViolation for any other broken invariant.
std::optional<ComparisonTriple> make_triple(Prompt prompt, Completion winner, Completion loser,
                                            SourceTag winner_source, SourceTag loser_source,
                                            PairCategory category,
                                            std::optional<int> sampling_iteration = std::nullopt);

/// Reads the JSON-lines demonstration file; see README for the schema.
std::vector<Demonstration> load_demonstrations(const std::filesystem::path& path,
                                               const TaskSpec& task);

}  // namespace demoalign

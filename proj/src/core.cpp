// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "demoalign/core.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "demoalign/error.h"

namespace demoalign {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 2) {
        fail(ErrorCode::InvalidArgument, "vocabulary needs at least two tokens");
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i].empty()) {
            fail(ErrorCode::InvalidArgument, "vocabulary token " + std::to_string(i) + " is empty");
        }
        auto [_, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
        if (!inserted) {
            fail(ErrorCode::InvalidArgument, "duplicate vocabulary token '" + tokens_[i] + "'");
        }
    }
}

const std::string& Vocabulary::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        fail(ErrorCode::InvalidArgument, "token id " + std::to_string(id) + " out of range");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view symbol) const {
    return index_.contains(std::string(symbol));
}

TokenId Vocabulary::index_of(std::string_view symbol) const {
    auto it = index_.find(std::string(symbol));
    if (it == index_.end()) {
        fail(ErrorCode::UnknownToken, "symbol '" + std::string(symbol) + "' is not in the vocabulary");
    }
    return it->second;
}

TokenSeq Vocabulary::encode(const std::vector<std::string>& symbols) const {
    TokenSeq ids;
    ids.reserve(symbols.size());
    for (const auto& s : symbols) {
        ids.push_back(index_of(s));
    }
    return ids;
}

std::vector<std::string> Vocabulary::decode(const TokenSeq& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (TokenId id : ids) {
        out.push_back(token(id));
    }
    return out;
}

std::string Vocabulary::render(const TokenSeq& ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += token(ids[i]);
    }
    return out;
}

void TaskSpec::validate() const {
    if (vocabulary.size() < 2) {
        fail(ErrorCode::InvalidArgument, "task vocabulary needs at least two tokens");
    }
    if (max_completion_length < 1) {
        fail(ErrorCode::InvalidArgument, "max_completion_length must be positive");
    }
    if (prompts.empty() || prompts.size() != weights.size()) {
        fail(ErrorCode::InvalidArgument, "task needs one weight per prompt and at least one prompt");
    }
    double total = 0.0;
    std::unordered_map<int, bool> seen;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        if (weights[i] < 0.0 || !std::isfinite(weights[i])) {
            fail(ErrorCode::InvalidArgument, "prompt weights must be finite and non-negative");
        }
        total += weights[i];
        if (!seen.emplace(prompts[i].id, true).second) {
            fail(ErrorCode::InvalidArgument, "duplicate prompt id " + std::to_string(prompts[i].id));
        }
        if (prompts[i].tokens.empty()) {
            fail(ErrorCode::InvalidArgument, "prompt " + std::to_string(prompts[i].id) + " is empty");
        }
        for (TokenId t : prompts[i].tokens) {
            if (t < 0 || static_cast<std::size_t>(t) >= vocabulary.size()) {
                fail(ErrorCode::InvalidArgument,
                     "prompt " + std::to_string(prompts[i].id) + " has an out-of-range token");
            }
        }
    }
    if (std::abs(total - 1.0) > 1e-12) {
        fail(ErrorCode::InvalidArgument, "prompt weights must sum to 1");
    }
}

std::optional<std::size_t> TaskSpec::find_prompt(int id) const {
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        if (prompts[i].id == id) {
            return i;
        }
    }
    return std::nullopt;
}

const Prompt& TaskSpec::prompt(int id) const {
    auto idx = find_prompt(id);
    if (!idx) {
        fail(ErrorCode::InvalidArgument, "unknown prompt id " + std::to_string(id));
    }
    return prompts[*idx];
}

TaskSpec make_task(Vocabulary vocabulary, std::vector<Prompt> prompts, int max_completion_length,
                   RewardFn reward) {
    TaskSpec task;
    task.vocabulary = std::move(vocabulary);
    task.weights.assign(prompts.size(), prompts.empty() ? 0.0 : 1.0 / static_cast<double>(prompts.size()));
    task.prompts = std::move(prompts);
    task.max_completion_length = max_completion_length;
    task.reward = std::move(reward);
    task.validate();
    return task;
}

bool outranks(const SourceTag& a, const SourceTag& b) {
    if (a.kind == SourceKind::Expert) {
        return b.kind == SourceKind::Checkpoint;
    }
    if (b.kind == SourceKind::Expert) {
        return false;
    }
    return a.iteration.value_or(-1) > b.iteration.value_or(-1);
}

std::string describe(const SourceTag& tag) {
    if (tag.kind == SourceKind::Expert) {
        return "expert";
    }
    return "checkpoint(" + std::to_string(tag.iteration.value_or(-1)) + ")";
}

std::string_view to_string(PairCategory category) {
    switch (category) {
    case PairCategory::Online: return "online";
    case PairCategory::Replay: return "replay";
    case PairCategory::Intermodel: return "intermodel";
    case PairCategory::Annotated: return "annotated";
    }
    return "unknown";
}

namespace {

std::optional<std::string> check_tag(const SourceTag& tag) {
    if (tag.kind == SourceKind::Expert && tag.iteration.has_value()) {
        return "expert source must not carry an iteration";
    }
    if (tag.kind == SourceKind::Checkpoint && (!tag.iteration || *tag.iteration < 0)) {
        return "checkpoint source needs a non-negative iteration";
    }
    return std::nullopt;
}

}  // namespace

std::optional<std::string> check_triple(const ComparisonTriple& triple,
                                        std::optional<int> sampling_iteration) {
    if (auto bad = check_tag(triple.winner_source)) {
        return "winner: " + *bad;
    }
    if (auto bad = check_tag(triple.loser_source)) {
        return "loser: " + *bad;
    }
    if (triple.winner.tokens == triple.loser.tokens) {
        return "winner and loser share a token sequence";
    }
    const auto& w = triple.winner_source;
    const auto& l = triple.loser_source;
    const bool w_expert = w.kind == SourceKind::Expert;
    const bool l_expert = l.kind == SourceKind::Expert;

    if (triple.category == PairCategory::Annotated) {
        if (w_expert || l_expert) {
            return "annotated pairs come from policy samples";
        }
        return std::nullopt;
    }
    if (!outranks(w, l)) {
        return describe(w) + " does not outrank " + describe(l);
    }
    switch (triple.category) {
    case PairCategory::Online:
        if (!w_expert) {
            return "online pair needs an expert winner";
        }
        if (sampling_iteration && *l.iteration != *sampling_iteration) {
            return "online loser must come from the current checkpoint";
        }
        break;
    case PairCategory::Replay:
        if (!w_expert) {
            return "replay pair needs an expert winner";
        }
        if (sampling_iteration && *l.iteration >= *sampling_iteration) {
            return "replay loser must come from an earlier checkpoint";
        }
        break;
    case PairCategory::Intermodel:
        if (w_expert) {
            return "intermodel pair compares two checkpoints";
        }
        if (sampling_iteration && *w.iteration > *sampling_iteration) {
            return "intermodel winner is newer than the sampling iteration";
        }
        break;
    case PairCategory::Annotated:
        break;
    }
    return std::nullopt;
}

std::optional<ComparisonTriple> make_triple(Prompt prompt, Completion winner, Completion loser,
                                            SourceTag winner_source, SourceTag loser_source,
                                            PairCategory category,
                                            std::optional<int> sampling_iteration) {
    if (winner.tokens == loser.tokens) {
        return std::nullopt;
    }
    ComparisonTriple triple{std::move(prompt), std::move(winner), std::move(loser),
                            winner_source,     loser_source,      category};
    if (auto bad = check_triple(triple, sampling_iteration)) {
        fail(ErrorCode::OrderingViolation, *bad);
    }
    return triple;
}

namespace {

std::vector<std::string> string_array(const nlohmann::json& record, const char* field,
                                      std::size_t line_no) {
    auto it = record.find(field);
    if (it == record.end() || !it->is_array()) {
        fail(ErrorCode::ParseError,
             "line " + std::to_string(line_no) + ": field '" + field + "' must be an array of strings");
    }
    std::vector<std::string> out;
    for (const auto& item : *it) {
        if (!item.is_string()) {
            fail(ErrorCode::ParseError,
                 "line " + std::to_string(line_no) + ": field '" + field + "' must hold strings");
        }
        out.push_back(item.get<std::string>());
    }
    return out;
}

}  // namespace

std::vector<Demonstration> load_demonstrations(const std::filesystem::path& path,
                                               const TaskSpec& task) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::IoError, "cannot open demonstrations file " + path.string());
    }
    std::vector<Demonstration> demos;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!record.is_object() || !record.contains("prompt_id") ||
            !record["prompt_id"].is_number_integer()) {
            fail(ErrorCode::ParseError,
                 "line " + std::to_string(line_no) + ": expected an object with integer 'prompt_id'");
        }
        Demonstration demo;
        demo.prompt.id = record["prompt_id"].get<int>();
        demo.prompt.tokens = task.vocabulary.encode(string_array(record, "prompt", line_no));
        demo.completion.tokens = task.vocabulary.encode(string_array(record, "completion", line_no));
        if (demo.prompt.tokens.empty()) {
            fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": empty prompt");
        }
        if (demo.completion.tokens.empty()) {
            fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": empty completion");
        }
        if (demo.completion.tokens.size() > static_cast<std::size_t>(task.max_completion_length)) {
            fail(ErrorCode::LengthExceeded,
                 "line " + std::to_string(line_no) + ": completion longer than max_completion_length");
        }
        demo.completion.terminated =
            demo.completion.tokens.size() < static_cast<std::size_t>(task.max_completion_length);
        if (auto idx = task.find_prompt(demo.prompt.id);
            idx && task.prompts[*idx].tokens != demo.prompt.tokens) {
            fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": prompt tokens disagree with task prompt " +
                                            std::to_string(demo.prompt.id));
        }
        demos.push_back(std::move(demo));
    }
    if (demos.empty()) {
        fail(ErrorCode::EmptyFile, "no demonstrations in " + path.string());
    }
    return demos;
}

}  // namespace demoalign

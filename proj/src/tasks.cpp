// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "demoalign/tasks.h"

#include <numeric>

#include "demoalign/error.h"
#include "demoalign/tabular_policy.h"
#include "demoalign/trainers.h"

namespace demoalign {

namespace {

Vocabulary letters(int n) {
    std::vector<std::string> symbols;
    for (int i = 0; i < n; ++i) {
        symbols.push_back(std::string(1, static_cast<char>('a' + i)));
    }
    return Vocabulary(symbols);
}

template <typename T>
void read_field(const nlohmann::json& j, const char* section, const char* key, T& out) {
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorCode::ConfigError, std::string(section) + "." + key + " has the wrong type");
    }
}

TokenSeq random_tokens(int length, int vocab, Rng& rng) {
    TokenSeq out(static_cast<std::size_t>(length));
    for (auto& t : out) {
        t = static_cast<TokenId>(rng.below(static_cast<std::size_t>(vocab)));
    }
    return out;
}

}  // namespace

nlohmann::json BanditParams::to_json() const {
    return {{"vocab_size", vocab_size}, {"length", length}, {"epsilon", epsilon}, {"demos", demos}, {"alpha", alpha}};
}

BanditParams BanditParams::from_json(const nlohmann::json& j) {
    BanditParams p;
    read_field(j, "task", "vocab_size", p.vocab_size);
    read_field(j, "task", "length", p.length);
    read_field(j, "task", "epsilon", p.epsilon);
    read_field(j, "task", "demos", p.demos);
    read_field(j, "task", "alpha", p.alpha);
    if (p.vocab_size < 2 || p.vocab_size > 26) {
        fail(ErrorCode::ConfigError, "task.vocab_size must lie in [2, 26]");
    }
    if (p.length < 1) {
        fail(ErrorCode::ConfigError, "task.length must be at least 1");
    }
    if (!(p.epsilon >= 0.0 && p.epsilon <= 1.0)) {
        fail(ErrorCode::ConfigError, "task.epsilon must lie in [0, 1]");
    }
    if (p.demos < 1) {
        fail(ErrorCode::ConfigError, "task.demos must be at least 1");
    }
    if (!(p.alpha > 0.0)) {
        fail(ErrorCode::ConfigError, "task.alpha must be positive");
    }
    return p;
}

SyntheticTask make_noisy_bandit(const BanditParams& params, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0xba9d));
    const Prompt x{0, {0}};
    const TokenSeq target(static_cast<std::size_t>(params.length), 0);

    SyntheticTask out;
    out.targets[x.id] = target;
    out.reward.emplace(pattern_match_reward(out.targets), params.alpha);
    out.train = make_task(letters(params.vocab_size), {x}, params.length, *out.reward);
    out.test = out.train;
    const auto arms = all_sequences(static_cast<std::size_t>(params.vocab_size), params.length, params.length,
                                    kDefaultEnumerationCap);
    out.reference = std::make_shared<TabularPolicy>(TabularPolicy::uniform({x}, arms, params.length));
    for (std::size_t d = 0; d < params.demos; ++d) {
        TokenSeq y = target;
        for (auto& t : y) {
            if (rng.uniform() < params.epsilon) {
                t = static_cast<TokenId>(1 + rng.below(static_cast<std::size_t>(params.vocab_size - 1)));
            }
        }
        out.demos.push_back({x, Completion{y, false}});
    }
    return out;
}

nlohmann::json SequenceParams::to_json() const {
    return {{"vocab_size", vocab_size},
            {"prompt_length", prompt_length},
            {"completion_length", completion_length},
            {"test_prompts", test_prompts},
            {"demos", demos},
            {"copy_probability", copy_probability},
            {"pretrain_examples", pretrain_examples},
            {"pretrain_epochs", pretrain_epochs},
            {"pretrain_learning_rate", pretrain_learning_rate},
            {"embed_dim", embed_dim},
            {"hidden_dim", hidden_dim},
            {"alpha", alpha}};
}

SequenceParams SequenceParams::from_json(const nlohmann::json& j) {
    SequenceParams p;
    read_field(j, "task", "vocab_size", p.vocab_size);
    read_field(j, "task", "prompt_length", p.prompt_length);
    read_field(j, "task", "completion_length", p.completion_length);
    read_field(j, "task", "test_prompts", p.test_prompts);
    read_field(j, "task", "demos", p.demos);
    read_field(j, "task", "copy_probability", p.copy_probability);
    read_field(j, "task", "pretrain_examples", p.pretrain_examples);
    read_field(j, "task", "pretrain_epochs", p.pretrain_epochs);
    read_field(j, "task", "pretrain_learning_rate", p.pretrain_learning_rate);
    read_field(j, "task", "embed_dim", p.embed_dim);
    read_field(j, "task", "hidden_dim", p.hidden_dim);
    read_field(j, "task", "alpha", p.alpha);
    if (p.vocab_size < 2 || p.vocab_size > 26) {
        fail(ErrorCode::ConfigError, "task.vocab_size must lie in [2, 26]");
    }
    if (p.completion_length < 1 || p.completion_length > p.prompt_length) {
        fail(ErrorCode::ConfigError, "task.completion_length must lie in [1, task.prompt_length]");
    }
    if (p.demos < 1 || p.test_prompts < 1) {
        fail(ErrorCode::ConfigError, "task.demos and task.test_prompts must be at least 1");
    }
    if (!(p.copy_probability >= 0.0 && p.copy_probability <= 1.0)) {
        fail(ErrorCode::ConfigError, "task.copy_probability must lie in [0, 1]");
    }
    if (!(p.alpha > 0.0)) {
        fail(ErrorCode::ConfigError, "task.alpha must be positive");
    }
    return p;
}

SyntheticTask make_sequence_task(const SequenceParams& params, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x5e9));
    const int v = params.vocab_size;

    // Substitution without fixed points, so the style never agrees with copying.
    std::vector<TokenId> style(static_cast<std::size_t>(v));
    bool deranged = false;
    while (!deranged) {
        std::iota(style.begin(), style.end(), 0);
        for (std::size_t i = style.size(); i > 1; --i) {
            std::swap(style[i - 1], style[rng.below(i)]);
        }
        deranged = true;
        for (int i = 0; i < v; ++i) {
            deranged = deranged && style[static_cast<std::size_t>(i)] != i;
        }
    }
    auto rewrite = [&](const TokenSeq& prompt) {
        TokenSeq y(static_cast<std::size_t>(params.completion_length));
        for (std::size_t k = 0; k < y.size(); ++k) {
            y[k] = style[static_cast<std::size_t>(prompt[k])];
        }
        return y;
    };

    SyntheticTask out;
    std::vector<Prompt> train, test;
    for (std::size_t i = 0; i < params.demos; ++i) {
        train.push_back({static_cast<int>(i), random_tokens(params.prompt_length, v, rng)});
    }
    for (std::size_t i = 0; i < params.test_prompts; ++i) {
        test.push_back({static_cast<int>(100000 + i), random_tokens(params.prompt_length, v, rng)});
    }
    for (const auto& p : train) {
        out.targets[p.id] = rewrite(p.tokens);
        out.demos.push_back({p, Completion{out.targets[p.id], false}});
    }
    for (const auto& p : test) {
        out.targets[p.id] = rewrite(p.tokens);
    }
    out.reward.emplace(pattern_match_reward(out.targets), params.alpha);
    const Vocabulary vocab = letters(v);
    out.train = make_task(vocab, train, params.completion_length, *out.reward);
    out.test = make_task(vocab, test, params.completion_length, *out.reward);

    AutoregressiveShape shape;
    shape.vocab_size = v;
    shape.context = params.prompt_length + params.completion_length;
    shape.embed_dim = params.embed_dim;
    shape.hidden_dim = params.hidden_dim;
    shape.max_length = params.completion_length;
    auto base = std::make_shared<AutoregressivePolicy>(shape, mix_seed(seed, 0x1a17));

    // Generic pretraining: copy the aligned prompt token, or emit noise.
    std::vector<Demonstration> corpus;
    for (std::size_t i = 0; i < params.pretrain_examples; ++i) {
        Prompt p{static_cast<int>(200000 + i), random_tokens(params.prompt_length, v, rng)};
        TokenSeq y(static_cast<std::size_t>(params.completion_length));
        for (std::size_t k = 0; k < y.size(); ++k) {
            y[k] = rng.uniform() < params.copy_probability
                       ? p.tokens[k]
                       : static_cast<TokenId>(rng.below(static_cast<std::size_t>(v)));
        }
        corpus.push_back({std::move(p), Completion{std::move(y), false}});
    }
    SftConfig pretrain;
    pretrain.learning_rate = params.pretrain_learning_rate;
    pretrain.batch_size = 32;
    pretrain.max_epochs = params.pretrain_epochs;
    pretrain.early_stop_loss = 0.0;
    pretrain.seed = mix_seed(seed, 0x9e7);
    sft_train(*base, corpus, pretrain);
    out.reference = base;
    return out;
}

SyntheticTask with_demo_count(const SyntheticTask& task, std::size_t n) {
    if (n == 0 || n > task.demos.size()) {
        fail(ErrorCode::InvalidArgument, "demo count must lie in [1, " + std::to_string(task.demos.size()) + "]");
    }
    SyntheticTask out = task;
    out.demos.resize(n);
    if (task.train.prompts.size() == task.demos.size() && task.train.prompts.size() > 1) {
        std::vector<Prompt> prompts;
        for (const auto& d : out.demos) {
            prompts.push_back(d.prompt);
        }
        out.train = make_task(task.train.vocabulary, prompts, task.train.max_completion_length, task.train.reward);
    }
    return out;
}

}  // namespace demoalign

// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

// Small hand-checkable instances shared by the unit and acceptance tests.

#pragma once

#include <unistd.h>

#include <cmath>
#include <memory>
#include <vector>

#include "demoalign/autoregressive_policy.h"
#include "demoalign/core.h"
#include "demoalign/oracle.h"
#include "demoalign/rng.h"
#include "demoalign/tabular_policy.h"

namespace fixtures {

using namespace demoalign;

inline Vocabulary letters(int n) {
    std::vector<std::string> symbols;
    for (int i = 0; i < n; ++i) {
        symbols.push_back(std::string(1, static_cast<char>('a' + i)));
    }
    return Vocabulary(symbols);
}

inline Completion seq(TokenSeq tokens, bool terminated = false) {
    return Completion{std::move(tokens), terminated};
}

// One prompt, completions y1 = "a" and y2 = "b".
struct Bandit2 {
    Prompt x{0, {0}};
    std::vector<Completion> ys{seq({0}), seq({1})};
    TaskSpec task;
    RewardTable reward;

    explicit Bandit2(double r1 = 1.0, double r2 = 0.0, double alpha = 1.0)
        : task(make_task(letters(2), {Prompt{0, {0}}}, 1)),
          reward(RewardTable::from_entries({{0, {0}, r1}, {0, {1}, r2}}, alpha)) {
        task.reward = reward.function();
    }

    TabularPolicy policy(double p1) const {
        TabularPolicy p = TabularPolicy::uniform({x}, ys, 1);
        const double logits[] = {std::log(p1), std::log(1.0 - p1)};
        p.set_logits(0, logits);
        return p;
    }
    TabularPolicy uniform() const { return TabularPolicy::uniform({x}, ys, 1); }
    TabularPolicy point_mass(std::size_t index) const {
        TabularPolicy p = uniform();
        std::vector<double> logits(ys.size(), 0.0);
        logits[index] = 60.0;
        p.set_logits(0, logits);
        return p;
    }
};

inline TabularPolicy random_tabular(Rng& rng, std::size_t prompts, std::size_t completions, double scale = 1.5) {
    std::vector<Prompt> xs;
    for (std::size_t i = 0; i < prompts; ++i) {
        xs.push_back({static_cast<int>(i), {static_cast<TokenId>(i % 2)}});
    }
    std::vector<Completion> ys = all_sequences(2, 1, 8);
    ys.resize(completions);
    TabularPolicy p = TabularPolicy::uniform(xs, ys, 8);
    for (auto& v : p.parameters().values()) {
        v = scale * rng.normal();
    }
    return p;
}

inline AutoregressivePolicy random_autoregressive(Rng& rng, bool end_token) {
    AutoregressiveShape shape;
    shape.vocab_size = 2 + static_cast<int>(rng.below(3));
    shape.context = 4 + static_cast<int>(rng.below(3));
    shape.embed_dim = 3 + static_cast<int>(rng.below(3));
    shape.hidden_dim = 4 + static_cast<int>(rng.below(5));
    shape.hidden_layers = 1 + static_cast<int>(rng.below(2));
    shape.max_length = 1 + static_cast<int>(rng.below(3));
    shape.end_token = end_token;
    return AutoregressivePolicy(shape, rng.next(), 0.8);
}

inline Prompt random_prompt(Rng& rng, int id, int vocab, int length) {
    Prompt x{id, {}};
    for (int i = 0; i < length; ++i) {
        x.tokens.push_back(static_cast<TokenId>(rng.below(static_cast<std::size_t>(vocab))));
    }
    return x;
}

}  // namespace fixtures

#include <filesystem>
#include <fstream>
#include <string>

namespace fixtures {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("demoalign-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

    std::filesystem::path write(const std::string& name, const std::string& content) const {
        std::ofstream(path_ / name) << content;
        return path_ / name;
    }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace fixtures

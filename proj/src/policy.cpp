// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "demoalign/policy.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "demoalign/autoregressive_policy.h"
#include "demoalign/error.h"
#include "demoalign/serialization.h"
#include "demoalign/tabular_policy.h"

namespace demoalign {

std::string_view to_string(PolicyKind kind) {
    switch (kind) {
    case PolicyKind::Tabular: return "tabular";
    case PolicyKind::Autoregressive: return "autoregressive";
    }
    return "unknown";
}

std::size_t ParameterVector::add_block(std::string name, std::size_t size) {
    for (const auto& b : layout_) {
        if (b.name == name) {
            fail(ErrorCode::InvalidArgument, "duplicate parameter block '" + name + "'");
        }
    }
    const std::size_t offset = values_.size();
    layout_.push_back({std::move(name), offset, size});
    values_.resize(offset + size, 0.0);
    return offset;
}

std::span<double> ParameterVector::block(std::string_view name) {
    for (const auto& b : layout_) {
        if (b.name == name) {
            return std::span<double>(values_).subspan(b.offset, b.size);
        }
    }
    fail(ErrorCode::InvalidArgument, "no parameter block '" + std::string(name) + "'");
}

std::span<const double> ParameterVector::block(std::string_view name) const {
    for (const auto& b : layout_) {
        if (b.name == name) {
            return std::span<const double>(values_).subspan(b.offset, b.size);
        }
    }
    fail(ErrorCode::InvalidArgument, "no parameter block '" + std::string(name) + "'");
}

bool ParameterVector::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::uint64_t ParameterVector::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : values_) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

PolicySnapshot::PolicySnapshot(std::shared_ptr<const Policy> policy, int iteration)
    : policy_(std::move(policy)), iteration_(iteration) {
    if (!policy_) {
        fail(ErrorCode::InvalidArgument, "snapshot of a null policy");
    }
    if (iteration_ < 0) {
        fail(ErrorCode::InvalidArgument, "snapshot iteration must be non-negative");
    }
}

double logprob(const Policy& policy, const Prompt& x, const Completion& y) {
    return policy.logprob(x, y);
}

std::vector<Completion> sample_completions(const Policy& policy, const Prompt& x, std::size_t m,
                                           double temperature, Rng& rng) {
    return policy.sample(x, m, temperature, rng);
}

std::vector<double> grad_logprob(const Policy& policy, const Prompt& x, const Completion& y) {
    std::vector<double> grad(policy.parameters().size(), 0.0);
    policy.accumulate_grad_logprob(x, y, 1.0, grad);
    return grad;
}

PolicySnapshot snapshot(const Policy& policy, int iteration) {
    return PolicySnapshot(std::shared_ptr<const Policy>(policy.clone()), iteration);
}

std::unique_ptr<Policy> restore(const PolicySnapshot& snap) {
    return snap.policy().clone();
}

void load_parameters(Policy& policy, const PolicySnapshot& snap) {
    if (policy.kind() != snap.kind() || policy.parameters().layout() != snap.parameters().layout()) {
        fail(ErrorCode::InvalidArgument, "snapshot layout does not match the live policy");
    }
    policy.parameters().values() = snap.parameters().values();
}

std::unique_ptr<Policy> policy_from_architecture(const nlohmann::json& arch) {
    try {
        const std::string kind = arch.at("kind").get<std::string>();
        if (kind == "tabular") {
            std::vector<int> ids;
            std::vector<std::vector<Completion>> rows;
            for (const auto& row : arch.at("rows")) {
                ids.push_back(row.at("prompt_id").get<int>());
                std::vector<Completion> comps;
                for (const auto& c : row.at("completions")) {
                    comps.push_back({c.at("tokens").get<TokenSeq>(), c.at("terminated").get<bool>()});
                }
                rows.push_back(std::move(comps));
            }
            return std::make_unique<TabularPolicy>(std::move(ids), std::move(rows),
                                                   arch.at("max_length").get<int>());
        }
        if (kind == "autoregressive") {
            AutoregressiveShape shape;
            shape.vocab_size = arch.at("vocab_size").get<int>();
            shape.context = arch.at("context").get<int>();
            shape.embed_dim = arch.at("embed_dim").get<int>();
            shape.hidden_dim = arch.at("hidden_dim").get<int>();
            shape.hidden_layers = arch.at("hidden_layers").get<int>();
            shape.max_length = arch.at("max_length").get<int>();
            shape.end_token = arch.at("end_token").get<bool>();
            return std::make_unique<AutoregressivePolicy>(shape, 0);
        }
        fail(ErrorCode::ParseError, "unknown policy kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("bad policy architecture: ") + e.what());
    }
}

void save_checkpoint(const PolicySnapshot& snap, const std::filesystem::path& path) {
    ByteWriter out;
    out.header(kCheckpointMagic);
    out.u32(static_cast<std::uint32_t>(snap.kind()));
    out.i32(snap.iteration());
    out.str(snap.policy().architecture().dump());
    const auto& params = snap.parameters();
    out.u32(static_cast<std::uint32_t>(params.layout().size()));
    for (const auto& b : params.layout()) {
        out.str(b.name);
        out.u64(b.offset);
        out.u64(b.size);
    }
    out.u64(params.size());
    for (double v : params.values()) {
        out.f64(v);
    }
    out.write_file(path);
}

PolicySnapshot load_checkpoint(const std::filesystem::path& path) {
    ByteReader in = ByteReader::from_file(path);
    in.expect_header(kCheckpointMagic);
    const std::uint32_t kind = in.u32();
    const int iteration = in.i32();
    nlohmann::json arch;
    try {
        arch = nlohmann::json::parse(in.str());
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::ParseError, std::string("checkpoint architecture: ") + e.what());
    }
    auto policy = policy_from_architecture(arch);
    if (static_cast<std::uint32_t>(policy->kind()) != kind) {
        fail(ErrorCode::ParseError, "checkpoint kind disagrees with its architecture");
    }
    std::vector<ParameterBlock> layout(in.u32());
    for (auto& b : layout) {
        b.name = in.str();
        b.offset = in.u64();
        b.size = in.u64();
    }
    if (layout != policy->parameters().layout()) {
        fail(ErrorCode::ParseError, "checkpoint layout disagrees with its architecture");
    }
    const std::uint64_t n = in.u64();
    if (n != policy->parameters().size()) {
        fail(ErrorCode::ParseError, "checkpoint parameter count mismatch");
    }
    for (auto& v : policy->parameters().values()) {
        v = in.f64();
    }
    if (!in.at_end()) {
        fail(ErrorCode::ParseError, "trailing bytes in checkpoint");
    }
    return PolicySnapshot(std::shared_ptr<const Policy>(std::move(policy)), iteration);
}

double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) {
        m = std::max(m, x);
    }
    if (!std::isfinite(m)) {
        return m;
    }
    double s = 0.0;
    for (double x : v) {
        s += std::exp(x - m);
    }
    return m + std::log(s);
}

void log_softmax(std::span<double> v) {
    const double lse = log_sum_exp(v);
    for (double& x : v) {
        x -= lse;
    }
}

}  // namespace demoalign

// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "demoalign/autoregressive_policy.h"

#include <cmath>
#include <limits>

#include "demoalign/error.h"
#include "demoalign/tabular_policy.h"

namespace demoalign {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

}  // namespace

void AutoregressiveShape::validate() const {
    if (vocab_size < 2 || vocab_size > 64) {
        fail(ErrorCode::InvalidArgument, "autoregressive vocab_size must be in [2, 64]");
    }
    if (context < 1 || context > 32) {
        fail(ErrorCode::InvalidArgument, "autoregressive context must be in [1, 32]");
    }
    if (embed_dim < 1 || hidden_dim < 1 || max_length < 1) {
        fail(ErrorCode::InvalidArgument, "autoregressive dimensions must be positive");
    }
    if (hidden_layers < 1 || hidden_layers > 2) {
        fail(ErrorCode::InvalidArgument, "autoregressive model has one or two hidden layers");
    }
    if (parameter_count() > 100'000) {
        fail(ErrorCode::InvalidArgument, "autoregressive model exceeds 100k parameters");
    }
}

std::size_t AutoregressiveShape::parameter_count() const {
    const std::size_t v = sz(vocab_size), d = sz(embed_dim), h = sz(hidden_dim);
    const std::size_t out = v + (end_token ? 1 : 0);
    const std::size_t in = (sz(context) + 1) * d;
    std::size_t n = (v + 1) * d + sz(max_length) * d;
    n += h * in + h;
    if (hidden_layers == 2) {
        n += h * h + h;
    }
    n += out * h + out;
    return n;
}

AutoregressivePolicy::AutoregressivePolicy(AutoregressiveShape shape, std::uint64_t init_seed,
                                           double init_scale)
    : shape_(shape) {
    shape_.validate();
    const std::size_t v = sz(shape_.vocab_size), d = sz(shape_.embed_dim), h = sz(shape_.hidden_dim);
    const std::size_t in = (sz(shape_.context) + 1) * d;
    off_embed_ = params_.add_block("embed", (v + 1) * d);
    off_pos_ = params_.add_block("position", sz(shape_.max_length) * d);
    std::size_t fan_in = in;
    for (int l = 0; l < shape_.hidden_layers; ++l) {
        off_w_.push_back(params_.add_block("hidden" + std::to_string(l) + "/w", h * fan_in));
        off_b_.push_back(params_.add_block("hidden" + std::to_string(l) + "/b", h));
        fan_in = h;
    }
    off_out_w_ = params_.add_block("out/w", output_size() * h);
    off_out_b_ = params_.add_block("out/b", output_size());

    Rng rng(init_seed);
    auto& p = params_.values();
    for (std::size_t i = 0; i < (v + 1) * d + sz(shape_.max_length) * d; ++i) {
        p[off_embed_ + i] = init_scale * rng.normal();
    }
    fan_in = in;
    for (int l = 0; l < shape_.hidden_layers; ++l) {
        const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < h * fan_in; ++i) {
            p[off_w_[sz(l)] + i] = s * rng.normal();
        }
        fan_in = h;
    }
    const double s_out = 0.1 / std::sqrt(static_cast<double>(h));
    for (std::size_t i = 0; i < output_size() * h; ++i) {
        p[off_out_w_ + i] = s_out * rng.normal();
    }
}

std::size_t AutoregressivePolicy::output_size() const noexcept {
    return sz(shape_.vocab_size) + (shape_.end_token ? 1 : 0);
}

void AutoregressivePolicy::forward(const Prompt& x, const TokenSeq& prefix, StepCache& cache) const {
    const std::size_t d = sz(shape_.embed_dim), h = sz(shape_.hidden_dim), w = sz(shape_.context);
    const auto& p = params_.values();
    const int pad = shape_.vocab_size;

    cache.position = static_cast<int>(prefix.size());
    cache.window.assign(w, pad);
    const std::size_t total = x.tokens.size() + prefix.size();
    for (std::size_t slot = 0; slot < w; ++slot) {
        // slot w-1 holds the most recent token
        const std::size_t back = w - 1 - slot;
        if (back >= total) {
            continue;
        }
        const std::size_t idx = total - 1 - back;
        cache.window[slot] = idx < x.tokens.size() ? x.tokens[idx] : prefix[idx - x.tokens.size()];
    }

    cache.input.assign((w + 1) * d, 0.0);
    for (std::size_t slot = 0; slot < w; ++slot) {
        const std::size_t row = off_embed_ + sz(cache.window[slot]) * d;
        std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(row), d,
                    cache.input.begin() + static_cast<std::ptrdiff_t>(slot * d));
    }
    const std::size_t prow = off_pos_ + sz(cache.position) * d;
    std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(prow), d,
                cache.input.begin() + static_cast<std::ptrdiff_t>(w * d));

    cache.hidden.resize(sz(shape_.hidden_layers));
    const std::vector<double>* in = &cache.input;
    for (int l = 0; l < shape_.hidden_layers; ++l) {
        auto& out = cache.hidden[sz(l)];
        out.assign(h, 0.0);
        const std::size_t fan_in = in->size();
        const double* wt = p.data() + off_w_[sz(l)];
        const double* b = p.data() + off_b_[sz(l)];
        for (std::size_t i = 0; i < h; ++i) {
            double acc = b[i];
            const double* row = wt + i * fan_in;
            for (std::size_t j = 0; j < fan_in; ++j) {
                acc += row[j] * (*in)[j];
            }
            out[i] = std::tanh(acc);
        }
        in = &out;
    }

    const std::size_t o = output_size();
    cache.logits.assign(o, 0.0);
    const double* wo = p.data() + off_out_w_;
    const double* bo = p.data() + off_out_b_;
    for (std::size_t k = 0; k < o; ++k) {
        double acc = bo[k];
        const double* row = wo + k * h;
        for (std::size_t j = 0; j < h; ++j) {
            acc += row[j] * (*in)[j];
        }
        cache.logits[k] = acc;
    }
}

std::vector<double> AutoregressivePolicy::step_logprobs(const StepCache& cache, double temperature) const {
    std::vector<double> lp(cache.logits);
    for (double& v : lp) {
        v /= temperature;
    }
    const bool mask_end = shape_.end_token && cache.position == 0;
    if (mask_end) {
        lp.back() = kNegInf;
    }
    log_softmax(lp);
    return lp;
}

void AutoregressivePolicy::backward(const StepCache& cache, std::span<const double> dlogits,
                                    std::span<double> grad) const {
    const std::size_t d = sz(shape_.embed_dim), h = sz(shape_.hidden_dim), w = sz(shape_.context);
    const auto& p = params_.values();
    const std::size_t o = output_size();
    const std::vector<double>& top = cache.hidden.back();

    std::vector<double> dh(h, 0.0);
    for (std::size_t k = 0; k < o; ++k) {
        const double g = dlogits[k];
        if (g == 0.0) {
            continue;
        }
        grad[off_out_b_ + k] += g;
        double* gw = grad.data() + off_out_w_ + k * h;
        const double* wo = p.data() + off_out_w_ + k * h;
        for (std::size_t j = 0; j < h; ++j) {
            gw[j] += g * top[j];
            dh[j] += g * wo[j];
        }
    }

    std::vector<double> dprev;
    for (int l = shape_.hidden_layers - 1; l >= 0; --l) {
        const auto& act = cache.hidden[sz(l)];
        const std::vector<double>& in = l == 0 ? cache.input : cache.hidden[sz(l) - 1];
        const std::size_t fan_in = in.size();
        dprev.assign(fan_in, 0.0);
        const double* wt = p.data() + off_w_[sz(l)];
        double* gw = grad.data() + off_w_[sz(l)];
        for (std::size_t i = 0; i < h; ++i) {
            const double da = dh[i] * (1.0 - act[i] * act[i]);
            if (da == 0.0) {
                continue;
            }
            grad[off_b_[sz(l)] + i] += da;
            const double* row = wt + i * fan_in;
            double* grow = gw + i * fan_in;
            for (std::size_t j = 0; j < fan_in; ++j) {
                grow[j] += da * in[j];
                dprev[j] += da * row[j];
            }
        }
        dh.swap(dprev);
    }

    // dh now holds the gradient w.r.t. the concatenated input.
    for (std::size_t slot = 0; slot < w; ++slot) {
        double* ge = grad.data() + off_embed_ + sz(cache.window[slot]) * d;
        for (std::size_t j = 0; j < d; ++j) {
            ge[j] += dh[slot * d + j];
        }
    }
    double* gp = grad.data() + off_pos_ + sz(cache.position) * d;
    for (std::size_t j = 0; j < d; ++j) {
        gp[j] += dh[w * d + j];
    }
}

std::vector<int> AutoregressivePolicy::targets(const Completion& y) const {
    const std::size_t len = y.tokens.size();
    if (len > sz(shape_.max_length)) {
        fail(ErrorCode::LengthExceeded, "completion longer than " + std::to_string(shape_.max_length));
    }
    if (!shape_.end_token && len != sz(shape_.max_length)) {
        fail(ErrorCode::InvalidArgument,
             "fixed-length model expects completions of exactly " + std::to_string(shape_.max_length) + " tokens");
    }
    if (shape_.end_token && len == 0) {
        fail(ErrorCode::InvalidArgument, "completions are never empty");
    }
    std::vector<int> out;
    out.reserve(len + 1);
    for (TokenId t : y.tokens) {
        if (t < 0 || t >= shape_.vocab_size) {
            fail(ErrorCode::InvalidArgument, "completion token out of range");
        }
        out.push_back(t);
    }
    if (shape_.end_token && len < sz(shape_.max_length)) {
        out.push_back(end_id());
    }
    return out;
}

std::size_t AutoregressivePolicy::prediction_count(const Completion& y) const {
    return targets(y).size();
}

double AutoregressivePolicy::logprob(const Prompt& x, const Completion& y) const {
    const auto tg = targets(y);
    StepCache cache;
    TokenSeq prefix;
    double total = 0.0;
    for (std::size_t k = 0; k < tg.size(); ++k) {
        prefix.assign(y.tokens.begin(), y.tokens.begin() + static_cast<std::ptrdiff_t>(k));
        forward(x, prefix, cache);
        total += step_logprobs(cache, 1.0)[sz(tg[k])];
    }
    return total;
}

double AutoregressivePolicy::accumulate_grad_logprob(const Prompt& x, const Completion& y, double scale,
                                                     std::span<double> grad) const {
    if (grad.size() != params_.size()) {
        fail(ErrorCode::InvalidArgument, "gradient buffer does not match parameter layout");
    }
    const auto tg = targets(y);
    StepCache cache;
    TokenSeq prefix;
    double total = 0.0;
    std::vector<double> dlogits(output_size());
    for (std::size_t k = 0; k < tg.size(); ++k) {
        prefix.assign(y.tokens.begin(), y.tokens.begin() + static_cast<std::ptrdiff_t>(k));
        forward(x, prefix, cache);
        const auto lp = step_logprobs(cache, 1.0);
        total += lp[sz(tg[k])];
        for (std::size_t i = 0; i < dlogits.size(); ++i) {
            dlogits[i] = std::isfinite(lp[i]) ? -scale * std::exp(lp[i]) : 0.0;
        }
        dlogits[sz(tg[k])] += scale;
        backward(cache, dlogits, grad);
    }
    return total;
}

std::vector<double> AutoregressivePolicy::next_token_logprobs(const Prompt& x, const TokenSeq& prefix,
                                                              double temperature) const {
    if (prefix.size() >= sz(shape_.max_length)) {
        fail(ErrorCode::LengthExceeded, "prefix already at max_length");
    }
    StepCache cache;
    forward(x, prefix, cache);
    return step_logprobs(cache, temperature);
}

std::vector<Completion> AutoregressivePolicy::sample(const Prompt& x, std::size_t m, double temperature,
                                                     Rng& rng) const {
    if (m < 1 || !(temperature > 0.0)) {
        fail(ErrorCode::InvalidArgument, "sample needs m >= 1 and temperature > 0");
    }
    std::vector<Completion> out;
    out.reserve(m);
    StepCache cache;
    std::vector<double> probs;
    for (std::size_t s = 0; s < m; ++s) {
        Completion c;
        while (c.tokens.size() < sz(shape_.max_length)) {
            forward(x, c.tokens, cache);
            const auto lp = step_logprobs(cache, temperature);
            probs.resize(lp.size());
            for (std::size_t i = 0; i < lp.size(); ++i) {
                probs[i] = std::exp(lp[i]);
            }
            const int tok = static_cast<int>(rng.categorical(probs));
            if (shape_.end_token && tok == end_id()) {
                c.terminated = true;
                break;
            }
            c.tokens.push_back(tok);
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<Completion> AutoregressivePolicy::completion_space(const Prompt&, std::size_t cap) const {
    const int min_len = shape_.end_token ? 1 : shape_.max_length;
    return all_sequences(sz(shape_.vocab_size), min_len, shape_.max_length, cap);
}

std::unique_ptr<Policy> AutoregressivePolicy::clone() const {
    return std::make_unique<AutoregressivePolicy>(*this);
}

nlohmann::json AutoregressivePolicy::architecture() const {
    return {{"kind", "autoregressive"},     {"vocab_size", shape_.vocab_size},
            {"context", shape_.context},    {"embed_dim", shape_.embed_dim},
            {"hidden_dim", shape_.hidden_dim}, {"hidden_layers", shape_.hidden_layers},
            {"max_length", shape_.max_length}, {"end_token", shape_.end_token}};
}

}  // namespace demoalign

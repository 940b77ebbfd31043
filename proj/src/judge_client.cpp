// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <httplib.h>

#include "demoalign/judge_client.h"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

#include "demoalign/error.h"

namespace demoalign {

namespace {

constexpr std::string_view kSystemMessage = "You are an impartial evaluator.";

constexpr std::string_view kTemplateHead =
    "You are an impartial evaluator. Below is a sample of a human author's writing and two options.\n\n"
    "### HUMAN AUTHOR'S WRITING:\n\n";
constexpr std::string_view kTemplateA = "\n\n### OUTPUT A:\n\n";
constexpr std::string_view kTemplateB = "\n\n### OUTPUT B:\n\n";
constexpr std::string_view kTemplateTail =
    "\n\n### Task\n\n"
    "Which option was written by the human author based on similarity to the HUMAN AUTHOR'S WRITING above? "
    "Respond only with a JSON of the following format:\n\n"
    "{\n  \"answer\": \"<The option most similar to the HUMAN AUTHOR'S WRITING; either A or B>\"\n}\n\n"
    "ALWAYS REMAIN IMPARTIAL WHEN EVALUATING OUTPUTS.";

std::optional<Verdict> search_text(std::string_view text);

std::optional<Verdict> search_value(const nlohmann::json& v) {
    if (v.is_object()) {
        if (auto it = v.find("answer"); it != v.end()) {
            if (it->is_string()) {
                std::string s = it->get<std::string>();
                const auto first = s.find_first_not_of(" \t\r\n");
                const auto last = s.find_last_not_of(" \t\r\n");
                s = first == std::string::npos ? "" : s.substr(first, last - first + 1);
                if (s == "A") {
                    return Verdict::A;
                }
                if (s == "B") {
                    return Verdict::B;
                }
            }
            fail(ErrorCode::MalformedJudgment, "answer must be \"A\" or \"B\", got " + it->dump());
        }
        for (const auto& [_, child] : v.items()) {
            if (auto found = search_value(child)) {
                return found;
            }
        }
    } else if (v.is_array()) {
        for (const auto& child : v) {
            if (auto found = search_value(child)) {
                return found;
            }
        }
    } else if (v.is_string()) {
        return search_text(v.get<std::string>());
    }
    return std::nullopt;
}

// Scans free text for balanced {...} spans that parse as JSON.
std::optional<Verdict> search_text(std::string_view text) {
    for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}' && --depth == 0) {
                auto parsed = nlohmann::json::parse(text.substr(start, i - start + 1), nullptr, false);
                if (!parsed.is_discarded() && parsed.is_object()) {
                    if (auto found = search_value(parsed)) {
                        return found;
                    }
                }
                break;
            }
        }
    }
    return std::nullopt;
}

struct SplitUrl {
    std::string base;
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, pattern)) {
        fail(ErrorCode::ConfigError, "judge.url: expected http(s)://host[:port]/path, got '" + url + "'");
    }
    return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

}  // namespace

void JudgeEndpoint::validate() const {
    split_url(url);
    if (model.empty()) {
        fail(ErrorCode::ConfigError, "judge.model must not be empty");
    }
    if (!(timeout_seconds > 0.0)) {
        fail(ErrorCode::ConfigError, "judge.timeout_seconds must be positive");
    }
    if (max_retries < 0) {
        fail(ErrorCode::ConfigError, "judge.max_retries must be non-negative");
    }
    if (!(backoff_seconds >= 0.0)) {
        fail(ErrorCode::ConfigError, "judge.backoff_seconds must be non-negative");
    }
    if (concurrency < 1) {
        fail(ErrorCode::ConfigError, "judge.concurrency must be at least 1");
    }
}

JudgeEndpoint JudgeEndpoint::from_json(const nlohmann::json& j) {
    JudgeEndpoint e;
    try {
        e.url = j.value("url", e.url);
        e.model = j.value("model", e.model);
        e.api_key_env = j.value("api_key_env", e.api_key_env);
        e.timeout_seconds = j.value("timeout_seconds", e.timeout_seconds);
        e.max_retries = j.value("max_retries", e.max_retries);
        e.backoff_seconds = j.value("backoff_seconds", e.backoff_seconds);
        e.concurrency = j.value("concurrency", e.concurrency);
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorCode::ConfigError, std::string("judge: ") + ex.what());
    }
    e.validate();
    return e;
}

nlohmann::json JudgeEndpoint::to_json() const {
    return {{"url", url},
            {"model", model},
            {"api_key_env", api_key_env},
            {"timeout_seconds", timeout_seconds},
            {"max_retries", max_retries},
            {"backoff_seconds", backoff_seconds},
            {"concurrency", concurrency}};
}

std::string render_judge_prompt(std::string_view demo, std::string_view text_a, std::string_view text_b) {
    std::string out;
    out.reserve(kTemplateHead.size() + kTemplateTail.size() + demo.size() + text_a.size() + text_b.size() + 64);
    out.append(kTemplateHead).append(demo).append(kTemplateA).append(text_a).append(kTemplateB).append(text_b);
    out.append(kTemplateTail);
    return out;
}

nlohmann::json judge_request(const JudgeEndpoint& endpoint, std::string_view demo, std::string_view text_a,
                             std::string_view text_b) {
    return {{"model", endpoint.model},
            {"temperature", 0.0},
            {"messages",
             nlohmann::json::array({{{"role", "system"}, {"content", kSystemMessage}},
                                    {{"role", "user"}, {"content", render_judge_prompt(demo, text_a, text_b)}}})}};
}

Verdict parse_judgment(std::string_view body) {
    auto parsed = nlohmann::json::parse(body, nullptr, false);
    auto found = parsed.is_discarded() ? search_text(body) : search_value(parsed);
    if (!found) {
        std::string excerpt(body.substr(0, 120));
        fail(ErrorCode::MalformedJudgment, "no JSON object with an answer in response: " + excerpt);
    }
    return *found;
}

Verdict external_judge_call(const JudgeEndpoint& endpoint, std::string_view demo, std::string_view text_a,
                            std::string_view text_b, JudgeCallStats* stats) {
    endpoint.validate();
    const SplitUrl url = split_url(endpoint.url);
    httplib::Client client(url.base);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(endpoint.timeout_seconds));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers headers;
    if (const char* key = std::getenv(endpoint.api_key_env.c_str()); key != nullptr && *key != '\0') {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    const std::string body = judge_request(endpoint, demo, text_a, text_b).dump();

    std::string last_error;
    for (int attempt = 0; attempt <= endpoint.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(
                std::chrono::duration<double>(endpoint.backoff_seconds * std::pow(2.0, attempt - 1)));
            if (stats != nullptr) {
                ++stats->retries;
            }
        }
        auto res = client.Post(url.path, headers, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            fail(ErrorCode::JudgeUnavailable, "judge returned HTTP " + std::to_string(res->status));
        }
        return parse_judgment(res->body);
    }
    fail(ErrorCode::JudgeUnavailable, "judge unreachable after " + std::to_string(endpoint.max_retries) +
                                          " retries: " + last_error);
}

ExternalJudge::ExternalJudge(JudgeEndpoint endpoint, Vocabulary vocabulary, std::map<int, std::string> references)
    : endpoint_(std::move(endpoint)), vocabulary_(std::move(vocabulary)), references_(std::move(references)) {
    endpoint_.validate();
}

Verdict ExternalJudge::prefer(const Prompt& x, const Completion& a, const Completion& b) const {
    {
        std::unique_lock lock(mutex_);
        slots_.wait(lock, [&] { return in_flight_ < endpoint_.concurrency; });
        ++in_flight_;
    }
    struct Release {
        const ExternalJudge* self;
        ~Release() {
            std::lock_guard lock(self->mutex_);
            --self->in_flight_;
            self->slots_.notify_one();
        }
    } release{this};

    const auto it = references_.find(x.id);
    const std::string demo = it == references_.end() ? std::string() : it->second;
    JudgeCallStats stats;
    const Verdict v = external_judge_call(endpoint_, demo, vocabulary_.render(a.tokens),
                                          vocabulary_.render(b.tokens), &stats);
    std::lock_guard lock(mutex_);
    retries_ += stats.retries;
    return v;
}

int ExternalJudge::total_retries() const {
    std::lock_guard lock(mutex_);
    return retries_;
}

}  // namespace demoalign

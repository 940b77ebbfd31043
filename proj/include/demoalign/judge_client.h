// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Chat-completion HTTP client for an external LLM judge.

#pragma once

#include <condition_variable>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "demoalign/eval.h"

namespace demoalign {

struct JudgeEndpoint {
    /// Full URL of the chat-completions route, http:// or https://.
    std::string url = "http://127.0.0.1:8000/v1/chat/completions";
    std::string model = "gpt-4";
    /// Environment variable holding the bearer token; unset means no auth header.
    std::string api_key_env = "DEMOALIGN_JUDGE_API_KEY";
    double timeout_seconds = 30.0;
    int max_retries = 3;
    double backoff_seconds = 0.5;
    int concurrency = 4;

    void validate() const;
    static JudgeEndpoint from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

std::string render_judge_prompt(std::string_view demo, std::string_view text_a, std::string_view text_b);

/// The request body sent for one comparison.
nlohmann::json judge_request(const JudgeEndpoint& endpoint, std::string_view demo, std::string_view text_a,
                             std::string_view text_b);

/// First JSON object with an "answer" key found anywhere in `body`, including
/// inside chat-completion message content. Throws MalformedJudgment.
Verdict parse_judgment(std::string_view body);

struct JudgeCallStats {
    int retries = 0;
};

/// One judgment. Retries transport failures, timeouts, 429 and 5xx with
/// exponential backoff; throws JudgeUnavailable once retries run out.
Verdict external_judge_call(const JudgeEndpoint& endpoint, std::string_view demo, std::string_view text_a,
                            std::string_view text_b, JudgeCallStats* stats = nullptr);

class ExternalJudge final : public Judge {
public:
    /// `references` maps prompt id to the expert text shown to the judge.
    ExternalJudge(JudgeEndpoint endpoint, Vocabulary vocabulary, std::map<int, std::string> references);

    JudgeKind kind() const override { return JudgeKind::ExternalLLM; }
    Verdict prefer(const Prompt& x, const Completion& a, const Completion& b) const override;
    int total_retries() const;

private:
    JudgeEndpoint endpoint_;
    Vocabulary vocabulary_;
    std::map<int, std::string> references_;
    mutable std::mutex mutex_;
    mutable std::condition_variable slots_;
    mutable int in_flight_ = 0;
    mutable int retries_ = 0;
};

}  // namespace demoalign

// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

// Scripted local chat-completions server for exercising the judge client
// without network access.

#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace stub {

struct Reply {
    int status = 200;
    std::string body;
    /// Delay before answering; longer than the client timeout forces a timeout.
    std::chrono::milliseconds delay{0};
};

inline std::string chat_body(const std::string& content) {
    nlohmann::json j = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
    return j.dump();
}

class JudgeServer {
public:
    /// `script(n)` decides the reply to the n-th request (0-based).
    explicit JudgeServer(std::function<Reply(int)> script) : script_(std::move(script)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const int n = requests_++;
            {
                std::lock_guard lock(mutex_);
                last_request_ = req.body;
            }
            const int now = ++in_flight_;
            int seen = max_in_flight_.load();
            while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
            }
            const Reply reply = script_(n);
            std::this_thread::sleep_for(reply.delay);
            --in_flight_;
            res.status = reply.status;
            res.set_content(reply.body, "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~JudgeServer() {
        server_.stop();
        thread_.join();
    }
    JudgeServer(const JudgeServer&) = delete;
    JudgeServer& operator=(const JudgeServer&) = delete;

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
    int requests() const { return requests_; }
    int max_in_flight() const { return max_in_flight_; }
    std::string last_request() const {
        std::lock_guard lock(mutex_);
        return last_request_;
    }

private:
    std::function<Reply(int)> script_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> requests_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
    mutable std::mutex mutex_;
    std::string last_request_;
};

}  // namespace stub

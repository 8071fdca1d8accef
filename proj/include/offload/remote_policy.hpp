#pragma once

// Policy backed by an external chat-completions endpoint: serialize the
// state, ask the model, parse the decision.

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "offload/serializer.hpp"
#include "offload/simulator.hpp"

namespace offload {

inline constexpr const char* kEnvUrl = "OFFLOAD_LLM_URL";
inline constexpr const char* kEnvApiKey = "OFFLOAD_LLM_API_KEY";
inline constexpr const char* kEnvModel = "OFFLOAD_LLM_MODEL";

struct RemoteConfig {
    std::string url;  // full endpoint, e.g. https://host/v1/chat/completions
    std::string api_key;
    std::string model = "default";
    double temperature = 0.0;
    int max_retries = 3;
    std::chrono::milliseconds backoff{500};  // doubled after each failed attempt
    std::chrono::milliseconds timeout{30000};
    int max_in_flight = 4;
    std::string audit_path;  // empty disables the audit log

    void validate() const;

    /// Reads the endpoint settings from the environment. Throws ConfigError
    /// naming the variable when the URL is missing.
    static RemoteConfig from_env();
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

/// POST transport. Implementations throw RemoteError on connection failures.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const std::string& url, const std::string& body, const Headers& headers,
                              std::chrono::milliseconds timeout) = 0;
};

/// HTTP(S) transport over cpp-httplib.
std::shared_ptr<Transport> make_http_transport();

/// First case-insensitive occurrence of "Execute Locally" (0) or "Server <k>" (k).
/// Throws ParseError when neither appears and RangeError when k is not in [1, E].
int parse_decision(std::string_view text, int num_servers);

/// Instruction sent as the system message.
std::string system_instruction();

/// Chat-completions request body.
std::string build_request(const RemoteConfig& config, const std::string& prompt);

/// choices[0].message.content of a response body. Throws ParseError.
std::string extract_reply(const std::string& body);

class RemotePolicy {
public:
    RemotePolicy(RemoteConfig config, std::shared_ptr<Transport> transport, PromptStyle style,
                 double slot_seconds);

    /// Serializes, queries with retries, and parses. Never touches the environment.
    int query(const SystemState& state);

    DecisionFn decision_fn();

    /// Replaces the backoff sleep (tests use a no-op).
    void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) { sleeper_ = std::move(sleeper); }

    int requests_sent() const { return requests_->load(); }

private:
    void audit(const std::string& prompt, const std::string& reply, double latency_ms, int attempts,
               const std::string& error);

    RemoteConfig config_;
    std::shared_ptr<Transport> transport_;
    PromptStyle style_;
    double slot_seconds_;
    std::function<void(std::chrono::milliseconds)> sleeper_;
    std::shared_ptr<std::counting_semaphore<>> in_flight_;
    std::shared_ptr<std::mutex> audit_mu_;
    std::shared_ptr<std::atomic<int>> requests_ = std::make_shared<std::atomic<int>>(0);
};

}  // namespace offload

#include "offload/remote_policy.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace offload {

void RemoteConfig::validate() const {
    if (url.empty()) throw ConfigError(kEnvUrl, "endpoint URL is not set");
    if (url.rfind("http://", 0) != 0 && url.rfind("https://", 0) != 0) {
        throw ConfigError(kEnvUrl, "must start with http:// or https://");
    }
    if (max_retries < 0) throw ConfigError("max_retries", "must be non-negative");
    if (max_in_flight < 1) throw ConfigError("max_in_flight", "must be at least 1");
    if (timeout.count() <= 0) throw ConfigError("timeout", "must be positive");
}

RemoteConfig RemoteConfig::from_env() {
    RemoteConfig c;
    auto get = [](const char* name) -> std::string {
        const char* v = std::getenv(name);
        return v ? std::string(v) : std::string();
    };
    c.url = get(kEnvUrl);
    c.api_key = get(kEnvApiKey);
    if (auto m = get(kEnvModel); !m.empty()) c.model = m;
    c.validate();
    return c;
}

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

class HttpTransport : public Transport {
public:
    HttpResponse post(const std::string& url, const std::string& body, const Headers& headers,
                      std::chrono::milliseconds timeout) override {
        const SplitUrl u = split_url(url);
        httplib::Client client(u.origin);
        if (!client.is_valid()) throw RemoteError("unsupported endpoint: " + u.origin);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        auto res = client.Post(u.path, h, body, "application/json");
        if (!res) throw RemoteError("request to " + url + " failed: " + httplib::to_string(res.error()));
        return {res->status, res->body};
    }
};

}  // namespace

std::shared_ptr<Transport> make_http_transport() { return std::make_shared<HttpTransport>(); }

int parse_decision(std::string_view text, int num_servers) {
    static const std::regex pattern(R"(execute\s+locally|server\s*(\d+))", std::regex::icase);
    const std::string s(text);
    std::smatch m;
    if (!std::regex_search(s, m, pattern)) throw ParseError("no decision found in reply", s);
    if (!m[1].matched) return 0;
    const std::string digits = m[1].str();
    if (digits.size() > 6) throw RangeError("server index " + digits + " out of range");
    const int k = std::stoi(digits);
    if (k < 1 || k > num_servers) {
        throw RangeError("server " + std::to_string(k) + " out of range [1, " + std::to_string(num_servers) + "]");
    }
    return k;
}

std::string system_instruction() {
    return "You schedule computation tasks in a mobile edge network. Read the task and server "
           "description and answer with exactly one line: either \"Execute Locally\" or "
           "\"Offload to Server k\" where k is a listed server number. Minimize the task's latency.";
}

std::string build_request(const RemoteConfig& config, const std::string& prompt) {
    nlohmann::ordered_json j;
    j["model"] = config.model;
    j["temperature"] = config.temperature;
    j["messages"] = nlohmann::ordered_json::array(
        {{{"role", "system"}, {"content", system_instruction()}}, {{"role", "user"}, {"content", prompt}}});
    return j.dump();
}

std::string extract_reply(const std::string& body) {
    try {
        const auto j = nlohmann::json::parse(body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError("malformed completion response", body);
    }
}

RemotePolicy::RemotePolicy(RemoteConfig config, std::shared_ptr<Transport> transport, PromptStyle style,
                           double slot_seconds)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      style_(style),
      slot_seconds_(slot_seconds),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }),
      audit_mu_(std::make_shared<std::mutex>()) {
    config_.validate();
    if (!transport_) throw ConfigError("transport", "must not be null");
    in_flight_ = std::make_shared<std::counting_semaphore<>>(config_.max_in_flight);
}

void RemotePolicy::audit(const std::string& prompt, const std::string& reply, double latency_ms, int attempts,
                         const std::string& error) {
    if (config_.audit_path.empty()) return;
    nlohmann::ordered_json j;
    j["prompt"] = prompt;
    j["reply"] = reply;
    j["latency_ms"] = latency_ms;
    j["attempts"] = attempts;
    if (!error.empty()) j["error"] = error;
    std::lock_guard lock(*audit_mu_);
    std::ofstream f(config_.audit_path, std::ios::app);
    if (!f) throw IoError("cannot open audit log: " + config_.audit_path);
    f << j.dump() << '\n';
}

int RemotePolicy::query(const SystemState& state) {
    const std::string prompt = serialize(state, slot_seconds_, style_);
    const std::string body = build_request(config_, prompt);
    Headers headers{{"Content-Type", "application/json"}};
    if (!config_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + config_.api_key);

    const auto start = std::chrono::steady_clock::now();
    auto elapsed_ms = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    };

    std::string last_error;
    auto delay = config_.backoff;
    for (int attempt = 1; attempt <= config_.max_retries + 1; ++attempt) {
        HttpResponse res;
        bool ok = false;
        {
            in_flight_->acquire();
            ++*requests_;
            try {
                res = transport_->post(config_.url, body, headers, config_.timeout);
                ok = res.status >= 200 && res.status < 300;
                if (!ok) last_error = "HTTP " + std::to_string(res.status);
            } catch (const RemoteError& ex) {
                last_error = ex.what();
            }
            in_flight_->release();
        }
        if (ok) {
            std::string reply;
            try {
                reply = extract_reply(res.body);
                const int action = parse_decision(reply, state.num_servers());
                audit(prompt, reply, elapsed_ms(), attempt, "");
                return action;
            } catch (const Error& ex) {
                audit(prompt, reply.empty() ? res.body : reply, elapsed_ms(), attempt, ex.what());
                throw;
            }
        }
        if (attempt <= config_.max_retries) {
            sleeper_(delay);
            delay *= 2;
        }
    }
    audit(prompt, "", elapsed_ms(), config_.max_retries + 1, last_error);
    throw RemoteError("endpoint failed after " + std::to_string(config_.max_retries + 1) +
                      " attempts: " + last_error);
}

DecisionFn RemotePolicy::decision_fn() {
    auto self = std::make_shared<RemotePolicy>(*this);
    return [self](const SystemState& s) { return self->query(s); };
}

}  // namespace offload

#include <deque>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "helpers.hpp"
#include "httplib.h"
#include "json.hpp"
#include "offload/remote_policy.hpp"

using namespace offload;

namespace {

std::string completion(const std::string& text) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}.dump();
}

/// Replays scripted responses; a status of -1 simulates a connection failure.
class StubTransport : public Transport {
public:
    explicit StubTransport(std::deque<HttpResponse> script) : script_(std::move(script)) {}
    HttpResponse post(const std::string&, const std::string& body, const Headers& headers,
                      std::chrono::milliseconds) override {
        bodies.push_back(body);
        last_headers = headers;
        if (script_.empty()) throw RemoteError("no scripted response");
        auto r = script_.front();
        if (script_.size() > 1) script_.pop_front();
        if (r.status < 0) throw RemoteError("connection refused");
        return r;
    }
    std::vector<std::string> bodies;
    Headers last_headers;

private:
    std::deque<HttpResponse> script_;
};

RemoteConfig stub_config(const std::string& audit = "") {
    RemoteConfig c;
    c.url = "http://stub.invalid/v1/chat/completions";
    c.api_key = "k";
    c.max_retries = 2;
    c.audit_path = audit;
    return c;
}

SystemState six_servers() {
    Rng rng(1);
    return testutil::random_state(rng, 6);
}

}  // namespace

TEST_CASE("decision parsing") {
    CHECK(parse_decision("Offload to Server 3", 6) == 3);
    CHECK(parse_decision("Execute Locally", 6) == 0);
    CHECK(parse_decision("  offload to SERVER 2.", 6) == 2);
    CHECK(parse_decision("I would pick Server 1 because Server 2 is busy", 6) == 1);
    CHECK(parse_decision("execute   locally please", 6) == 0);
    CHECK(parse_decision("server11", 11) == 11);
    CHECK_THROWS_AS(parse_decision("Server 9", 6), RangeError);
    CHECK_THROWS_AS(parse_decision("Server 0", 6), RangeError);
    CHECK_THROWS_AS(parse_decision("Server 99999999999", 6), RangeError);
    CHECK_THROWS_AS(parse_decision("", 6), ParseError);
    try {
        parse_decision("no idea", 6);
    } catch (const ParseError& e) {
        CHECK(e.raw() == "no idea");
    }
    for (int e = 1; e <= 11; ++e) {
        for (int a = 0; a <= e; ++a) CHECK(parse_decision(label_text(a), e) == a);
    }
}

TEST_CASE("request and response shapes") {
    const auto body = nlohmann::json::parse(build_request(stub_config(), "hello"));
    CHECK(body["model"] == "default");
    CHECK(body["temperature"] == 0.0);
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"][1]["content"] == "hello");
    CHECK(extract_reply(completion("Server 2")) == "Server 2");
    CHECK_THROWS_AS(extract_reply("{}"), ParseError);
    CHECK_THROWS_AS(extract_reply("not json"), ParseError);
}

TEST_CASE("configuration") {
    RemoteConfig c;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.url = "ftp://x";
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.url = "https://x/y";
    CHECK_NOTHROW(c.validate());
    c.max_in_flight = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("successful query with audit record") {
    const auto dir = testutil::scratch_dir("remote");
    const auto audit = (dir / "audit.jsonl").string();
    auto stub = std::make_shared<StubTransport>(std::deque<HttpResponse>{{200, completion("Offload to Server 4")}});
    RemotePolicy policy(stub_config(audit), stub, {}, 0.1);
    const auto s = six_servers();
    const auto before = state_to_json(s).dump();
    CHECK(policy.query(s) == 4);
    CHECK(policy.query(s) == 4);
    CHECK(state_to_json(s).dump() == before);
    CHECK(policy.requests_sent() == 2);
    REQUIRE(stub->bodies.size() == 2);
    CHECK(stub->bodies[0] == stub->bodies[1]);
    bool auth = false;
    for (const auto& [k, v] : stub->last_headers) auth = auth || (k == "Authorization" && v == "Bearer k");
    CHECK(auth);

    std::ifstream f(audit);
    std::string line;
    int lines = 0;
    while (std::getline(f, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j["reply"] == "Offload to Server 4");
        CHECK(j.contains("prompt"));
        CHECK(j.contains("latency_ms"));
        ++lines;
    }
    CHECK(lines == 2);
}

TEST_CASE("retries then gives up") {
    auto stub = std::make_shared<StubTransport>(std::deque<HttpResponse>{{-1, ""}, {503, ""}, {500, ""}});
    RemotePolicy policy(stub_config(), stub, {}, 0.1);
    std::vector<long> sleeps;
    policy.set_sleeper([&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
    CHECK_THROWS_AS(policy.query(six_servers()), RemoteError);
    CHECK(policy.requests_sent() == 3);
    CHECK(sleeps == std::vector<long>{500, 1000});
}

TEST_CASE("recovers after a transient failure") {
    auto stub = std::make_shared<StubTransport>(std::deque<HttpResponse>{{502, ""}, {200, completion("Execute Locally")}});
    RemotePolicy policy(stub_config(), stub, {}, 0.1);
    policy.set_sleeper([](std::chrono::milliseconds) {});
    CHECK(policy.query(six_servers()) == 0);
    CHECK(policy.requests_sent() == 2);
}

TEST_CASE("parse and range errors are not retried") {
    {
        auto stub = std::make_shared<StubTransport>(std::deque<HttpResponse>{{200, completion("I am not sure")}});
        RemotePolicy policy(stub_config(), stub, {}, 0.1);
        try {
            policy.query(six_servers());
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(e.raw() == "I am not sure");
        }
        CHECK(policy.requests_sent() == 1);
    }
    {
        auto stub = std::make_shared<StubTransport>(std::deque<HttpResponse>{{200, completion("Server 9")}});
        RemotePolicy policy(stub_config(), stub, {}, 0.1);
        CHECK_THROWS_AS(policy.query(six_servers()), RangeError);
        CHECK(policy.requests_sent() == 1);
    }
}

TEST_CASE("talks to a local HTTP endpoint") {
    httplib::Server server;
    std::string seen_model;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        seen_model = body["model"];
        res.set_content(completion("Offload to Server 2"), "application/json");
    });
    server.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    RemoteConfig c;
    c.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    c.model = "tiny";
    RemotePolicy ok(c, make_http_transport(), {}, 0.1);
    CHECK(ok.query(six_servers()) == 2);
    CHECK(seen_model == "tiny");

    c.url = "http://127.0.0.1:" + std::to_string(port) + "/broken";
    c.max_retries = 1;
    RemotePolicy broken(c, make_http_transport(), {}, 0.1);
    broken.set_sleeper([](std::chrono::milliseconds) {});
    CHECK_THROWS_AS(broken.query(six_servers()), RemoteError);

    server.stop();
    worker.join();
}

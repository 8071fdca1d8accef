#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "offload/config.hpp"

using namespace offload;

TEST_CASE("json round trip") {
    RunConfig c;
    c.sim.num_servers = 9;
    c.sim.channel_mode = ChannelMode::shannon;
    c.train.iterations = 17;
    c.lacs.lambda_weight = 0.7;
    const auto back = config_from_json(config_to_json(c));
    CHECK(back.sim.num_servers == 9);
    CHECK(back.sim.channel_mode == ChannelMode::shannon);
    CHECK(back.train.iterations == 17);
    CHECK(back.lacs.lambda_weight == 0.7);
    CHECK(config_to_json(back) == config_to_json(c));
}

TEST_CASE("partial files keep defaults") {
    const auto c = config_from_json(nlohmann::json::parse(R"({"sim": {"num_servers": 3}})"));
    CHECK(c.sim.num_servers == 3);
    CHECK(c.sim.num_users == SimConfig{}.num_users);
    CHECK(c.train.group_size == 8);
}

TEST_CASE("rejects unknown keys, bad types and bad values") {
    auto field_of = [](const char* text) {
        try {
            config_from_json(nlohmann::json::parse(text)).validate();
        } catch (const ConfigError& e) {
            return e.field();
        }
        return std::string("none");
    };
    CHECK(field_of(R"({"sim": {"num_servrs": 3}})") == "sim.num_servrs");
    CHECK(field_of(R"({"sim": {"num_servers": "three"}})") == "sim.num_servers");
    CHECK(field_of(R"({"extra": {}})") == "extra");
    CHECK(field_of(R"({"sim": {"num_servers": 0}})") == "num_servers");
    CHECK(field_of(R"({"sim": {"channel_mode": "magic"}})") == "sim.channel_mode");
    CHECK(field_of(R"({"train": {"clip_eps": 2.0}})") == "clip_eps");
}

TEST_CASE("loading from disk") {
    const auto dir = testutil::scratch_dir("config");
    std::ofstream(dir / "ok.json") << R"({"lacs": {"lookahead_k": 5}})";
    CHECK(load_config((dir / "ok.json").string()).lacs.lookahead_k == 5);
    std::ofstream(dir / "bad.json") << "{oops";
    CHECK_THROWS_AS(load_config((dir / "bad.json").string()), ConfigError);
    CHECK_THROWS_AS(load_config((dir / "missing.json").string()), IoError);
}

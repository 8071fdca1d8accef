#include "offload/config.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace offload {

namespace {

template <typename T>
using Binder = std::map<std::string, std::function<void(T&, const nlohmann::json&)>>;

template <typename T, typename V>
std::function<void(T&, const nlohmann::json&)> field(V T::*member) {
    return [member](T& obj, const nlohmann::json& v) { obj.*member = v.get<V>(); };
}

const Binder<SimConfig>& sim_binder() {
    static const Binder<SimConfig> b = {
        {"num_servers", field(&SimConfig::num_servers)},
        {"num_users", field(&SimConfig::num_users)},
        {"slot_seconds", field(&SimConfig::slot_seconds)},
        {"arrival_prob", field(&SimConfig::arrival_prob)},
        {"capacity_min_hz", field(&SimConfig::capacity_min_hz)},
        {"capacity_max_hz", field(&SimConfig::capacity_max_hz)},
        {"size_min_bits", field(&SimConfig::size_min_bits)},
        {"size_max_bits", field(&SimConfig::size_max_bits)},
        {"density", field(&SimConfig::density)},
        {"deadline_slots", field(&SimConfig::deadline_slots)},
        {"deadline_penalty", field(&SimConfig::deadline_penalty)},
        {"local_freq_hz", field(&SimConfig::local_freq_hz)},
        {"episode_slots", field(&SimConfig::episode_slots)},
        {"seed", field(&SimConfig::seed)},
        {"history_len", field(&SimConfig::history_len)},
        {"channel_mode",
         [](SimConfig& c, const nlohmann::json& v) {
             const auto s = v.get<std::string>();
             if (s == "direct") c.channel_mode = ChannelMode::direct;
             else if (s == "shannon") c.channel_mode = ChannelMode::shannon;
             else throw ConfigError("sim.channel_mode", "expected \"direct\" or \"shannon\"");
         }},
        {"rate_min_bps", field(&SimConfig::rate_min_bps)},
        {"rate_max_bps", field(&SimConfig::rate_max_bps)},
        {"bandwidth_hz", field(&SimConfig::bandwidth_hz)},
        {"mean_rate_bps", field(&SimConfig::mean_rate_bps)},
        {"capacities_hz", field(&SimConfig::capacities_hz)},
    };
    return b;
}

const Binder<TrainConfig>& train_binder() {
    static const Binder<TrainConfig> b = {
        {"learning_rate", field(&TrainConfig::learning_rate)},
        {"group_size", field(&TrainConfig::group_size)},
        {"clip_eps", field(&TrainConfig::clip_eps)},
        {"kl_coeff", field(&TrainConfig::kl_coeff)},
        {"discount", field(&TrainConfig::discount)},
        {"adv_eps", field(&TrainConfig::adv_eps)},
        {"iterations", field(&TrainConfig::iterations)},
        {"batch_states", field(&TrainConfig::batch_states)},
        {"eval_interval", field(&TrainConfig::eval_interval)},
        {"eval_episodes", field(&TrainConfig::eval_episodes)},
        {"seed", field(&TrainConfig::seed)},
        {"sft_epochs", field(&TrainConfig::sft_epochs)},
        {"sft_step", field(&TrainConfig::sft_step)},
        {"parallel", field(&TrainConfig::parallel)},
    };
    return b;
}

const Binder<LacsConfig>& lacs_binder() {
    static const Binder<LacsConfig> b = {
        {"lookahead_k", field(&LacsConfig::lookahead_k)},
        {"lambda_weight", field(&LacsConfig::lambda_weight)},
        {"size_factor_low", field(&LacsConfig::size_factor_low)},
        {"size_factor_high", field(&LacsConfig::size_factor_high)},
        {"seed_stream", field(&LacsConfig::seed_stream)},
    };
    return b;
}

template <typename T>
void apply(T& obj, const Binder<T>& binder, const nlohmann::json& section, const std::string& name) {
    if (!section.is_object()) throw ConfigError(name, "section must be an object");
    for (const auto& [key, value] : section.items()) {
        auto it = binder.find(key);
        if (it == binder.end()) throw ConfigError(name + "." + key, "unknown key");
        try {
            it->second(obj, value);
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(name + "." + key, "wrong value type");
        }
    }
}

}  // namespace

void RunConfig::validate() const {
    sim.validate();
    train.validate();
    lacs.validate();
}

RunConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config", "top level must be an object");
    RunConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "sim") apply(c.sim, sim_binder(), value, key);
        else if (key == "train") apply(c.train, train_binder(), value, key);
        else if (key == "lacs") apply(c.lacs, lacs_binder(), value, key);
        else throw ConfigError(key, "unknown section");
    }
    c.validate();
    return c;
}

nlohmann::ordered_json config_to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    auto& s = j["sim"];
    s["num_servers"] = c.sim.num_servers;
    s["num_users"] = c.sim.num_users;
    s["slot_seconds"] = c.sim.slot_seconds;
    s["arrival_prob"] = c.sim.arrival_prob;
    s["capacity_min_hz"] = c.sim.capacity_min_hz;
    s["capacity_max_hz"] = c.sim.capacity_max_hz;
    s["size_min_bits"] = c.sim.size_min_bits;
    s["size_max_bits"] = c.sim.size_max_bits;
    s["density"] = c.sim.density;
    s["deadline_slots"] = c.sim.deadline_slots;
    s["deadline_penalty"] = c.sim.deadline_penalty;
    s["local_freq_hz"] = c.sim.local_freq_hz;
    s["episode_slots"] = c.sim.episode_slots;
    s["seed"] = c.sim.seed;
    s["history_len"] = c.sim.history_len;
    s["channel_mode"] = c.sim.channel_mode == ChannelMode::direct ? "direct" : "shannon";
    s["rate_min_bps"] = c.sim.rate_min_bps;
    s["rate_max_bps"] = c.sim.rate_max_bps;
    s["bandwidth_hz"] = c.sim.bandwidth_hz;
    s["mean_rate_bps"] = c.sim.mean_rate_bps;
    s["capacities_hz"] = c.sim.capacities_hz;
    auto& t = j["train"];
    t["learning_rate"] = c.train.learning_rate;
    t["group_size"] = c.train.group_size;
    t["clip_eps"] = c.train.clip_eps;
    t["kl_coeff"] = c.train.kl_coeff;
    t["discount"] = c.train.discount;
    t["adv_eps"] = c.train.adv_eps;
    t["iterations"] = c.train.iterations;
    t["batch_states"] = c.train.batch_states;
    t["eval_interval"] = c.train.eval_interval;
    t["eval_episodes"] = c.train.eval_episodes;
    t["seed"] = c.train.seed;
    t["sft_epochs"] = c.train.sft_epochs;
    t["sft_step"] = c.train.sft_step;
    t["parallel"] = c.train.parallel;
    auto& l = j["lacs"];
    l["lookahead_k"] = c.lacs.lookahead_k;
    l["lambda_weight"] = c.lacs.lambda_weight;
    l["size_factor_low"] = c.lacs.size_factor_low;
    l["size_factor_high"] = c.lacs.size_factor_high;
    l["seed_stream"] = c.lacs.seed_stream;
    return j;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& ex) {
        throw ConfigError("config", std::string("not valid JSON: ") + ex.what());
    }
    return config_from_json(j);
}

}  // namespace offload

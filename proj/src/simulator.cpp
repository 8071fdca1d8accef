#include "offload/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "json.hpp"

namespace offload {

void SimConfig::validate() const {
    auto require = [](bool ok, const char* field, const char* what) {
        if (!ok) throw ConfigError(field, what);
    };
    require(num_servers >= 1, "num_servers", "must be at least 1");
    require(num_users >= 1, "num_users", "must be at least 1");
    require(slot_seconds > 0.0, "slot_seconds", "must be positive");
    require(arrival_prob >= 0.0 && arrival_prob <= 1.0, "arrival_prob", "must lie in [0, 1]");
    require(capacity_min_hz > 0.0, "capacity_min_hz", "must be positive");
    require(capacity_min_hz <= capacity_max_hz, "capacity_max_hz", "must be >= capacity_min_hz");
    require(size_min_bits > 0.0, "size_min_bits", "must be positive");
    require(size_min_bits <= size_max_bits, "size_max_bits", "must be >= size_min_bits");
    require(density > 0.0, "density", "must be positive");
    require(deadline_slots > 0.0, "deadline_slots", "must be positive");
    require(deadline_penalty >= 0.0, "deadline_penalty", "must be non-negative");
    require(local_freq_hz > 0.0, "local_freq_hz", "must be positive");
    require(episode_slots > 0, "episode_slots", "must be positive");
    require(history_len >= 0, "history_len", "must be non-negative");
    require(rate_min_bps > 0.0, "rate_min_bps", "must be positive");
    require(rate_min_bps <= rate_max_bps, "rate_max_bps", "must be >= rate_min_bps");
    require(bandwidth_hz > 0.0, "bandwidth_hz", "must be positive");
    require(mean_rate_bps > 0.0, "mean_rate_bps", "must be positive");
    if (!capacities_hz.empty()) {
        require(static_cast<int>(capacities_hz.size()) == num_servers, "capacities_hz",
                "must have num_servers entries");
        for (double c : capacities_hz) require(c > 0.0, "capacities_hz", "entries must be positive");
    }
}

RateSampler SimConfig::rate_sampler() const {
    RateSampler s;
    s.mode = channel_mode;
    s.min_rate_bps = rate_min_bps;
    s.max_rate_bps = rate_max_bps;
    if (channel_mode == ChannelMode::shannon) {
        static std::mutex mu;
        static std::map<std::pair<double, double>, ChannelModel> cache;
        std::lock_guard lock(mu);
        auto key = std::make_pair(bandwidth_hz, mean_rate_bps);
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(key, calibrate_channel(bandwidth_hz, mean_rate_bps)).first;
        s.channel = it->second;
    }
    return s;
}

Environment::Environment(SimConfig config)
    : config_(std::move(config)), rng_(Rng::stream(config_.seed, streams::environment)) {
    config_.validate();
    rates_ = config_.rate_sampler();

    Rng server_rng = Rng::stream(config_.seed, streams::servers);
    servers_.resize(static_cast<std::size_t>(config_.num_servers));
    for (int e = 0; e < config_.num_servers; ++e) {
        auto& s = servers_[static_cast<std::size_t>(e)].state;
        s.id = e + 1;
        s.capacity_hz = config_.capacities_hz.empty()
                            ? server_rng.uniform(config_.capacity_min_hz, config_.capacity_max_hz)
                            : config_.capacities_hz[static_cast<std::size_t>(e)];
    }
    local_backlog_.assign(static_cast<std::size_t>(config_.num_users), 0.0);
    ledgers_.assign(servers_.size(), ServerLedger{});
}

std::vector<Task> Environment::sample_arrivals() {
    finish_slot();
    ++slot_;
    drained_this_slot_ = false;
    last_obs_.reset();

    std::vector<Task> tasks;
    for (int u = 0; u < config_.num_users; ++u) {
        if (!rng_.bernoulli(config_.arrival_prob)) continue;
        Task t;
        t.id = next_task_id_++;
        t.user = u;
        t.size_bits = rng_.uniform(config_.size_min_bits, config_.size_max_bits);
        t.density_cycles_per_bit = config_.density;
        t.deadline_slots = config_.deadline_slots;
        tasks.push_back(t);
    }
    return tasks;
}

SystemState Environment::observe(const Task& task) {
    SystemState s;
    s.task = task;
    s.uplink_rates_bps = rates_.sample_n(config_.num_servers, rng_);
    s.device.local_freq_hz = config_.local_freq_hz;
    if (task.user >= 0 && task.user < config_.num_users) {
        s.device.local_backlog_bits = local_backlog_[static_cast<std::size_t>(task.user)];
    }
    s.servers = server_states();
    s.slot = slot_;
    last_obs_ = s;
    return s;
}

std::vector<ServerState> Environment::server_states() const {
    std::vector<ServerState> out;
    out.reserve(servers_.size());
    for (const auto& srv : servers_) {
        ServerState s = srv.state;
        s.history.assign(srv.history.begin(), srv.history.end());
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<double> Environment::local_backlogs() const { return local_backlog_; }

std::vector<double> Environment::capacities() const {
    std::vector<double> out;
    for (const auto& s : servers_) out.push_back(s.state.capacity_hz);
    return out;
}

void Environment::drain_all() {
    for (std::size_t e = 0; e < servers_.size(); ++e) {
        auto& srv = servers_[e];
        auto& st = srv.state;
        const double capacity = drain_bits_per_slot(st, config_.density, config_.slot_seconds);
        const double taken = std::min(st.backlog_bits, capacity);
        st.backlog_bits -= taken;
        ledgers_[e].drained_bits += taken;

        double left = taken;
        while (left > 0.0 && !srv.fifo.empty()) {
            const double part = std::min(srv.fifo.front(), left);
            srv.fifo.front() -= part;
            left -= part;
            if (srv.fifo.front() <= 1e-9) srv.fifo.pop_front();
        }
        if (st.backlog_bits <= 0.0) {
            st.backlog_bits = 0.0;
            srv.fifo.clear();
        }
        st.active_tasks = static_cast<int>(srv.fifo.size());
    }
    for (auto& l : local_backlog_) {
        DeviceState d{config_.local_freq_hz, l};
        l = std::max(0.0, l - local_drain_bits_per_slot(d, config_.density, config_.slot_seconds));
    }
}

void Environment::record_history() {
    if (config_.history_len == 0) return;
    for (auto& srv : servers_) {
        srv.history.push_back(srv.state.backlog_bits);
        while (static_cast<int>(srv.history.size()) > config_.history_len) srv.history.pop_front();
    }
}

StepRecord Environment::step(const Task& task, int action) {
    if (action < 0 || action > config_.num_servers) {
        throw InvalidActionError(action, config_.num_servers);
    }
    SystemState state = (last_obs_ && last_obs_->task.id == task.id && last_obs_->task.user == task.user)
                            ? *last_obs_
                            : observe(task);

    StepRecord rec;
    const double latency_s = candidate_latency(state, action);
    const CostParams cp = config_.cost_params();
    rec.action = action;
    rec.latency_slots = to_slots(latency_s, cp);
    rec.cost = generalized_cost(latency_s, task, cp);
    rec.deadline_violated = rec.latency_slots > task.deadline_slots;
    rec.state = std::move(state);

    if (!drained_this_slot_) {
        drain_all();
        drained_this_slot_ = true;
    }
    if (action == 0) {
        if (task.user >= 0 && task.user < config_.num_users) {
            local_backlog_[static_cast<std::size_t>(task.user)] += task.size_bits;
        }
    } else {
        const auto e = static_cast<std::size_t>(action - 1);
        auto& srv = servers_[e];
        srv.fifo.push_back(task.size_bits);
        srv.state.backlog_bits += task.size_bits;
        srv.state.active_tasks = static_cast<int>(srv.fifo.size());
        ledgers_[e].admitted_bits += task.size_bits;
    }
    record_history();
    for (std::size_t e = 0; e < servers_.size(); ++e) {
        auto& led = ledgers_[e];
        led.min_backlog_bits = std::min(led.min_backlog_bits, servers_[e].state.backlog_bits);
        led.min_active_tasks = std::min(led.min_active_tasks, servers_[e].state.active_tasks);
        led.final_backlog_bits = servers_[e].state.backlog_bits;
    }
    last_obs_.reset();
    return rec;
}

void Environment::finish_slot() {
    if (!drained_this_slot_) {
        drain_all();
        drained_this_slot_ = true;
        for (std::size_t e = 0; e < servers_.size(); ++e) {
            ledgers_[e].final_backlog_bits = servers_[e].state.backlog_bits;
        }
    }
}

void Environment::preload(int server, double backlog_bits, int active_tasks) {
    if (server < 1 || server > config_.num_servers) throw InvalidActionError(server, config_.num_servers);
    auto& srv = servers_[static_cast<std::size_t>(server - 1)];
    const double previous = srv.state.backlog_bits;
    srv.fifo.clear();
    if (backlog_bits > 0.0) {
        const int n = std::max(active_tasks, 1);
        for (int i = 0; i < n; ++i) srv.fifo.push_back(backlog_bits / n);
    }
    srv.state.backlog_bits = std::max(0.0, backlog_bits);
    srv.state.active_tasks = backlog_bits > 0.0 ? static_cast<int>(srv.fifo.size()) : 0;
    // Preloaded work counts as admitted so the bit ledger stays balanced.
    auto& led = ledgers_[static_cast<std::size_t>(server - 1)];
    led.admitted_bits += srv.state.backlog_bits - previous;
    led.final_backlog_bits = srv.state.backlog_bits;
}

void Environment::preload_local(int user, double backlog_bits) {
    local_backlog_.at(static_cast<std::size_t>(user)) = std::max(0.0, backlog_bits);
}

EpisodeTrace run_episode(Environment& env, const DecisionFn& policy) {
    EpisodeTrace trace;
    trace.config = env.config();
    trace.capacities_hz = env.capacities();
    trace.action_counts.assign(static_cast<std::size_t>(env.num_servers() + 1), 0);

    auto finalize = [&] {
        env.finish_slot();
        trace.ledgers = env.ledgers();
        trace.final_backlogs.clear();
        for (const auto& s : env.server_states()) trace.final_backlogs.push_back(s.backlog_bits);
    };

    for (int t = 0; t < env.config().episode_slots; ++t) {
        for (const Task& task : env.sample_arrivals()) {
            try {
                const SystemState state = env.observe(task);
                const int action = policy(state);
                StepRecord rec = env.step(task, action);
                ++trace.action_counts[static_cast<std::size_t>(rec.action)];
                trace.records.push_back(std::move(rec));
            } catch (const std::exception& ex) {
                finalize();
                throw EpisodeAborted(std::string("episode aborted: ") + ex.what(), std::move(trace));
            }
        }
    }
    finalize();
    return trace;
}

std::string trace_to_jsonl(const EpisodeTrace& trace) {
    std::ostringstream out;
    for (const auto& r : trace.records) {
        nlohmann::ordered_json j;
        j["slot"] = r.state.slot;
        j["user"] = r.state.task.user;
        j["size_bits"] = r.state.task.size_bits;
        j["action"] = r.action;
        j["latency_slots"] = r.latency_slots;
        j["cost"] = r.cost;
        j["violated"] = r.deadline_violated;
        out << j.dump() << '\n';
    }
    return out.str();
}

void write_trace(const EpisodeTrace& trace, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open trace file for writing: " + path);
    f << trace_to_jsonl(trace);
    if (!f) throw IoError("failed writing trace file: " + path);
}

}  // namespace offload

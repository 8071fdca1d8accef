#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "offload/errors.hpp"
#include "offload/rng.hpp"
#include "offload/system_model.hpp"

namespace offload {

struct SimConfig {
    int num_servers = 6;
    int num_users = 5;
    double slot_seconds = 0.1;
    double arrival_prob = 0.3;
    double capacity_min_hz = 20e9;
    double capacity_max_hz = 48e9;
    double size_min_bits = 2e6;
    double size_max_bits = 5e6;
    double density = 297.0;  // cycles per bit
    double deadline_slots = 10.0;
    double deadline_penalty = 10.0;
    double local_freq_hz = 2e9;
    int episode_slots = 200;
    std::uint64_t seed = 1;
    int history_len = 5;

    ChannelMode channel_mode = ChannelMode::direct;
    double rate_min_bps = 7e6;
    double rate_max_bps = 21e6;
    double bandwidth_hz = 10e6;
    double mean_rate_bps = 14e6;

    /// Fixed server capacities; when non-empty they replace random sampling
    /// and must have `num_servers` entries.
    std::vector<double> capacities_hz;

    /// Throws ConfigError naming the first invalid field.
    void validate() const;

    CostParams cost_params() const { return {deadline_penalty, slot_seconds}; }

    /// Rate sampler for this configuration. Shannon mode calibrates the
    /// channel once per (bandwidth, mean rate) pair and caches the result.
    RateSampler rate_sampler() const;
};

/// One decision's outcome. `state` is the observation the decision was made on.
struct StepRecord {
    SystemState state;
    int action = 0;
    double latency_slots = 0.0;
    double cost = 0.0;
    std::optional<double> shaped_reward;
    bool deadline_violated = false;

    double base_reward() const { return -cost; }
};

/// Per-server bit accounting over an episode.
struct ServerLedger {
    double admitted_bits = 0.0;
    double drained_bits = 0.0;
    double final_backlog_bits = 0.0;
    double min_backlog_bits = 0.0;
    int min_active_tasks = 0;
};

struct EpisodeTrace {
    SimConfig config;
    std::vector<StepRecord> records;
    std::vector<double> final_backlogs;
    std::vector<double> capacities_hz;
    /// Index 0 counts local executions, index e counts server e.
    std::vector<int> action_counts;
    std::vector<ServerLedger> ledgers;
};

class EpisodeAborted : public Error {
public:
    EpisodeAborted(const std::string& what, EpisodeTrace partial)
        : Error(what), partial_(std::move(partial)) {}
    const EpisodeTrace& partial() const noexcept { return partial_; }

private:
    EpisodeTrace partial_;
};

using DecisionFn = std::function<int(const SystemState&)>;

/// Builds an independent decision function for one episode. Stateful
/// policies (random, round robin, sampling scorers) seed themselves from the
/// episode seed, so episodes can run in any order or concurrently.
using PolicyFactory = std::function<DecisionFn(std::uint64_t episode_seed)>;

/// Slotted MEC environment. Each slot, servers and local queues drain once at
/// their processor-sharing rate; the drain is applied by the first decision of
/// the slot (drain, then admit) or at slot close when no
/// decision happened. Decisions within a slot are sequential.
class Environment {
public:
    explicit Environment(SimConfig config);

    const SimConfig& config() const { return config_; }
    int num_servers() const { return config_.num_servers; }
    int slot() const { return slot_; }

    /// Closes the current slot and opens the next one, returning this slot's
    /// tasks in user order.
    std::vector<Task> sample_arrivals();

    /// Observation for `task` with freshly drawn uplink rates. Queues are untouched.
    SystemState observe(const Task& task);

    /// Applies `action` to `task` using the rates of the latest observation of
    /// this task (observing first if needed). Invalid actions throw
    /// InvalidActionError and leave the environment unmodified.
    StepRecord step(const Task& task, int action);

    /// Applies a pending idle drain for the current slot, if any.
    void finish_slot();

    /// Overwrites a server's queue: `active_tasks` equal shares of `backlog_bits`.
    void preload(int server, double backlog_bits, int active_tasks);
    void preload_local(int user, double backlog_bits);

    std::vector<ServerState> server_states() const;
    std::vector<double> local_backlogs() const;
    const std::vector<ServerLedger>& ledgers() const { return ledgers_; }
    std::vector<double> capacities() const;

private:
    struct Server {
        ServerState state;
        std::deque<double> fifo;  // remaining bits per admitted task
        std::deque<double> history;
    };

    void drain_all();
    void record_history();

    SimConfig config_;
    RateSampler rates_;
    Rng rng_;
    std::vector<Server> servers_;
    std::vector<double> local_backlog_;
    std::vector<ServerLedger> ledgers_;
    int slot_ = 0;
    int next_task_id_ = 0;
    bool drained_this_slot_ = false;
    std::optional<SystemState> last_obs_;
};

/// Runs one episode of `config.episode_slots` slots. Policy or action errors
/// abort with EpisodeAborted carrying the partial trace.
EpisodeTrace run_episode(Environment& env, const DecisionFn& policy);

/// One JSON object per record: slot, user, size_bits, action, latency_slots, cost, violated.
void write_trace(const EpisodeTrace& trace, const std::string& path);
std::string trace_to_jsonl(const EpisodeTrace& trace);

}  // namespace offload

#pragma once

// Delay, queue and cost physics of the offloading system. Everything here is
// pure: values in, values out. Internal units are SI (seconds, bits, Hz,
// cycles); costs are reported in time slots.

#include <cstdint>
#include <vector>

#include "offload/rng.hpp"

namespace offload {

inline constexpr double kGiga = 1e9;
inline constexpr double kMega = 1e6;

/// One offloadable job.
struct Task {
    int id = 0;
    int user = 0;
    double size_bits = 0.0;
    double density_cycles_per_bit = 297.0;
    double deadline_slots = 10.0;

    double workload_cycles() const { return size_bits * density_cycles_per_bit; }
};

/// Shannon-rate uplink parameters. The power gain |h|^2 is drawn per link
/// from a unit-mean exponential (Rayleigh block fading).
struct ChannelModel {
    double bandwidth_hz = 10e6;
    double tx_power_w = 0.1;
    double noise_power_w = 0.1;

    double snr_scale() const { return tx_power_w / noise_power_w; }
};

struct ServerState {
    int id = 0;
    double capacity_hz = 0.0;
    int active_tasks = 0;
    double backlog_bits = 0.0;
    /// Most recent backlog samples in bits, oldest first.
    std::vector<double> history;
};

/// The deciding user's device.
struct DeviceState {
    double local_freq_hz = 2e9;
    double local_backlog_bits = 0.0;
};

/// Observable state for one decision.
struct SystemState {
    Task task;
    std::vector<double> uplink_rates_bps;  // one per server
    DeviceState device;
    std::vector<ServerState> servers;
    int slot = 0;

    int num_servers() const { return static_cast<int>(servers.size()); }
    int num_actions() const { return num_servers() + 1; }
};

struct CostParams {
    double deadline_penalty = 10.0;  // rho, in slots
    double slot_seconds = 0.1;       // delta t
};

/// The three additive terms of an edge (or local) latency, in seconds.
struct LatencyTerms {
    double upload_s = 0.0;
    double wait_s = 0.0;
    double exec_s = 0.0;

    double total() const { return upload_s + wait_s + exec_s; }
};

double uplink_rate(const ChannelModel& channel, double gain);

double local_latency(const Task& task, const DeviceState& device);
LatencyTerms local_latency_terms(const Task& task, const DeviceState& device);

/// Processor-sharing rate seen by a newly admitted task: F / (N + 1).
double effective_rate(const ServerState& server);

double edge_latency(const Task& task, const ServerState& server, double uplink_bps);
LatencyTerms edge_latency_terms(const Task& task, const ServerState& server, double uplink_bps);

/// Latency of executing `state.task` at `action` (0 = local, e = server e).
/// Throws InvalidActionError outside [0, E].
double candidate_latency(const SystemState& state, int action);
LatencyTerms candidate_latency_terms(const SystemState& state, int action);

/// Latency in slots plus the deadline penalty when it strictly exceeds the deadline.
double generalized_cost(double latency_s, const Task& task, const CostParams& params);

inline double to_slots(double seconds, const CostParams& params) {
    return seconds / params.slot_seconds;
}

/// Bits a server drains in one slot at its current processor-sharing rate.
double drain_bits_per_slot(const ServerState& server, double density, double slot_seconds);

/// Bits the device drains locally in one slot.
double local_drain_bits_per_slot(const DeviceState& device, double density, double slot_seconds);

enum class ChannelMode { direct, shannon };

/// Draws per-link uplink rates. `direct` samples the rate uniformly in
/// [min_rate, max_rate]; `shannon` draws an exponential gain and applies the
/// Shannon formula with a calibrated channel.
struct RateSampler {
    ChannelMode mode = ChannelMode::direct;
    double min_rate_bps = 7e6;
    double max_rate_bps = 21e6;
    ChannelModel channel{};

    double sample(Rng& rng) const;
    std::vector<double> sample_n(int n, Rng& rng) const;
};

/// Finds the SNR scale P/sigma^2 so that the mean Shannon rate under unit-mean
/// exponential gain equals `target_mean_bps`, using a fixed set of Monte Carlo
/// gain samples drawn from `seed`. Returns a channel with that P and sigma^2 = 1.
ChannelModel calibrate_channel(double bandwidth_hz, double target_mean_bps, int samples = 100000,
                               std::uint64_t seed = 0x5eed);

/// Monte Carlo mean rate of `channel` with `samples` fresh gains.
double mean_shannon_rate(const ChannelModel& channel, int samples, std::uint64_t seed);

}  // namespace offload

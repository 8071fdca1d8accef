#include "offload/system_model.hpp"

#include <algorithm>
#include <cmath>

#include "offload/errors.hpp"

namespace offload {

double uplink_rate(const ChannelModel& channel, double gain) {
    return channel.bandwidth_hz * std::log2(1.0 + channel.tx_power_w * gain / channel.noise_power_w);
}

LatencyTerms local_latency_terms(const Task& task, const DeviceState& device) {
    LatencyTerms t;
    t.wait_s = device.local_backlog_bits * task.density_cycles_per_bit / device.local_freq_hz;
    t.exec_s = task.workload_cycles() / device.local_freq_hz;
    return t;
}

double local_latency(const Task& task, const DeviceState& device) {
    return local_latency_terms(task, device).total();
}

double effective_rate(const ServerState& server) {
    return server.capacity_hz / static_cast<double>(server.active_tasks + 1);
}

LatencyTerms edge_latency_terms(const Task& task, const ServerState& server, double uplink_bps) {
    LatencyTerms t;
    t.upload_s = task.size_bits / uplink_bps;
    t.wait_s = server.backlog_bits * task.density_cycles_per_bit / effective_rate(server);
    t.exec_s = task.workload_cycles() * static_cast<double>(server.active_tasks + 1) / server.capacity_hz;
    return t;
}

double edge_latency(const Task& task, const ServerState& server, double uplink_bps) {
    return edge_latency_terms(task, server, uplink_bps).total();
}

LatencyTerms candidate_latency_terms(const SystemState& state, int action) {
    if (action < 0 || action > state.num_servers()) {
        throw InvalidActionError(action, state.num_servers());
    }
    if (action == 0) return local_latency_terms(state.task, state.device);
    const auto idx = static_cast<std::size_t>(action - 1);
    return edge_latency_terms(state.task, state.servers[idx], state.uplink_rates_bps[idx]);
}

double candidate_latency(const SystemState& state, int action) {
    return candidate_latency_terms(state, action).total();
}

double generalized_cost(double latency_s, const Task& task, const CostParams& params) {
    const double slots = to_slots(latency_s, params);
    return slots > task.deadline_slots ? slots + params.deadline_penalty : slots;
}

double drain_bits_per_slot(const ServerState& server, double density, double slot_seconds) {
    return effective_rate(server) * slot_seconds / density;
}

double local_drain_bits_per_slot(const DeviceState& device, double density, double slot_seconds) {
    return device.local_freq_hz * slot_seconds / density;
}

double RateSampler::sample(Rng& rng) const {
    if (mode == ChannelMode::direct) return rng.uniform(min_rate_bps, max_rate_bps);
    // Guard against a zero-rate link; an exponential gain of exactly 0 has probability ~2^-53.
    return std::max(uplink_rate(channel, rng.exponential()), 1.0);
}

std::vector<double> RateSampler::sample_n(int n, Rng& rng) const {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (auto& r : out) r = sample(rng);
    return out;
}

namespace {

double mean_rate_for(const std::vector<double>& gains, double bandwidth_hz, double snr) {
    double acc = 0.0;
    for (double g : gains) acc += bandwidth_hz * std::log2(1.0 + snr * g);
    return acc / static_cast<double>(gains.size());
}

}  // namespace

double mean_shannon_rate(const ChannelModel& channel, int samples, std::uint64_t seed) {
    Rng rng = Rng::stream(seed, streams::calibration);
    double acc = 0.0;
    for (int i = 0; i < samples; ++i) acc += uplink_rate(channel, rng.exponential());
    return acc / samples;
}

ChannelModel calibrate_channel(double bandwidth_hz, double target_mean_bps, int samples,
                               std::uint64_t seed) {
    Rng rng = Rng::stream(seed, streams::calibration);
    std::vector<double> gains(static_cast<std::size_t>(samples));
    for (auto& g : gains) g = rng.exponential();

    // The mean rate is increasing in snr; bisect on log scale.
    double lo = 1e-6;
    double hi = 1e6;
    for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(lo * hi);
        if (mean_rate_for(gains, bandwidth_hz, mid) < target_mean_bps) lo = mid; else hi = mid;
    }
    ChannelModel ch;
    ch.bandwidth_hz = bandwidth_hz;
    ch.noise_power_w = 1.0;
    ch.tx_power_w = 0.5 * (lo + hi);
    return ch;
}

}  // namespace offload

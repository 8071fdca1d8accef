#include "offload/lacs.hpp"

#include <algorithm>

#include "offload/errors.hpp"
#include "offload/oracle.hpp"

namespace offload {

void LacsConfig::validate() const {
    if (lookahead_k < 1) throw ConfigError("lookahead_k", "must be at least 1");
    if (lambda_weight < 0.0) throw ConfigError("lambda_weight", "must be non-negative");
    if (!(size_factor_low > 0.0)) throw ConfigError("size_factor_low", "must be positive");
    if (size_factor_high < size_factor_low) throw ConfigError("size_factor_high", "must be >= size_factor_low");
}

SystemState virtual_transition(const SystemState& state, int action, double slot_seconds) {
    if (action < 0 || action > state.num_servers()) throw InvalidActionError(action, state.num_servers());

    SystemState next = state;
    const double density = state.task.density_cycles_per_bit;
    for (auto& s : next.servers) {
        s.backlog_bits = std::max(0.0, s.backlog_bits - drain_bits_per_slot(s, density, slot_seconds));
        if (s.backlog_bits == 0.0) s.active_tasks = 0;
    }
    next.device.local_backlog_bits = std::max(
        0.0, next.device.local_backlog_bits - local_drain_bits_per_slot(next.device, density, slot_seconds));

    if (action == 0) {
        next.device.local_backlog_bits += state.task.size_bits;
    } else {
        auto& chosen = next.servers[static_cast<std::size_t>(action - 1)];
        chosen.backlog_bits += state.task.size_bits;
        chosen.active_tasks += 1;
    }
    for (auto& s : next.servers) {
        if (s.history.empty()) continue;
        s.history.erase(s.history.begin());
        s.history.push_back(s.backlog_bits);
    }
    next.slot += 1;
    return next;
}

std::vector<Task> sample_future_tasks(const Task& base, const LacsConfig& config, int num_users, Rng& rng) {
    std::vector<Task> out;
    out.reserve(static_cast<std::size_t>(config.lookahead_k));
    for (int k = 0; k < config.lookahead_k; ++k) {
        Task t = base;
        t.id = -1 - k;
        t.size_bits = base.size_bits * rng.uniform(config.size_factor_low, config.size_factor_high);
        t.user = static_cast<int>(rng.index(static_cast<std::uint64_t>(std::max(num_users, 1))));
        out.push_back(t);
    }
    return out;
}

std::vector<FutureTask> sample_futures(const Task& base, int num_servers, const LacsConfig& config,
                                       const LacsContext& ctx, Rng& rng) {
    std::vector<FutureTask> out;
    for (const Task& t : sample_future_tasks(base, config, ctx.num_users, rng)) {
        out.push_back({t, ctx.rates.sample_n(num_servers, rng)});
    }
    return out;
}

double impact_of(const SystemState& virtual_state, std::span<const FutureTask> futures, const CostParams& cost) {
    if (futures.empty()) return 0.0;
    SystemState probe = virtual_state;
    double acc = 0.0;
    for (const auto& f : futures) {
        probe.task = f.task;
        probe.uplink_rates_bps = f.uplink_rates_bps;
        acc += oracle_cost(probe, cost);
    }
    return acc / static_cast<double>(futures.size());
}

double impact(const SystemState& state, int action, const LacsConfig& config, const LacsContext& ctx, Rng& rng) {
    const SystemState next = virtual_transition(state, action, ctx.cost.slot_seconds);
    const auto futures = sample_futures(state.task, state.num_servers(), config, ctx, rng);
    return impact_of(next, futures, ctx.cost);
}

double shaped_reward(double cost_j, double impact_c, const LacsConfig& config) {
    return -(cost_j + config.lambda_weight * impact_c);
}

double discounted_return(std::span<const double> rewards, double eta) {
    if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("discount", "must lie in (0, 1)");
    double acc = 0.0;
    double w = 1.0;
    for (double r : rewards) {
        acc += w * r;
        w *= eta;
    }
    return acc;
}

}  // namespace offload

#pragma once

// Look-ahead reward shaping: apply the candidate action to a copy of the
// state, sample a handful of plausible next tasks, and charge the action for
// the best cost those tasks could still get afterwards.

#include <cstdint>
#include <span>
#include <vector>

#include "offload/rng.hpp"
#include "offload/system_model.hpp"

namespace offload {

struct LacsConfig {
    int lookahead_k = 3;
    double lambda_weight = 0.3;
    double size_factor_low = 0.5;
    double size_factor_high = 1.5;
    std::uint64_t seed_stream = streams::lacs;

    void validate() const;
};

/// What the look-ahead needs to know about the world beyond the state itself.
struct LacsContext {
    CostParams cost{};
    RateSampler rates{};
    int num_users = 1;
};

struct FutureTask {
    Task task;
    std::vector<double> uplink_rates_bps;
};

/// Successor of `state` under `action` after one slot of service, without
/// touching the input. Servers whose backlog drains to zero lose their
/// active tasks before the admission.
SystemState virtual_transition(const SystemState& state, int action, double slot_seconds);

/// K tasks with size uniform in [low*D, high*D], the base task's density and
/// deadline, and a uniformly drawn user.
std::vector<Task> sample_future_tasks(const Task& base, const LacsConfig& config, int num_users, Rng& rng);

/// Future tasks plus fresh per-server uplink rates for each.
std::vector<FutureTask> sample_futures(const Task& base, int num_servers, const LacsConfig& config,
                                       const LacsContext& ctx, Rng& rng);

/// Mean over `futures` of the oracle cost of each task against `virtual_state`.
double impact_of(const SystemState& virtual_state, std::span<const FutureTask> futures,
                 const CostParams& cost);

/// C_impact(s, a): virtual transition, K sampled futures, mean best cost.
double impact(const SystemState& state, int action, const LacsConfig& config, const LacsContext& ctx,
              Rng& rng);

/// -(J + lambda * C_impact).
double shaped_reward(double cost_j, double impact_c, const LacsConfig& config);

/// sum_l eta^l r_l. Requires 0 < eta < 1.
double discounted_return(std::span<const double> rewards, double eta);

}  // namespace offload

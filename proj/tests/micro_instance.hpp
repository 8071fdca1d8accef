#pragma once

// Deterministic 3-step, 2-server congestion instance: a small task, then a
// large one, then a small one. Dynamics are the look-ahead virtual transition.

#include <array>
#include <vector>

#include "offload/lacs.hpp"
#include "offload/oracle.hpp"

namespace micro {

struct Instance {
    double f1 = 40e9;
    double f2 = 24e9;
    std::array<double, 3> sizes{4e6, 12e6, 4e6};
    std::array<std::array<double, 2>, 3> rates{{{21e6, 18.9e6}, {14e6, 14e6}, {14e6, 14e6}}};
    offload::CostParams cost{};
};

inline offload::SystemState initial(const Instance& in) {
    offload::SystemState s;
    s.device = {2e9, 0.0};
    s.servers = {{1, in.f1, 0, 0.0, {}}, {2, in.f2, 0, 0.0, {}}};
    return s;
}

inline void load_task(offload::SystemState& s, const Instance& in, int t) {
    s.task = offload::Task{};
    s.task.id = t;
    s.task.size_bits = in.sizes[static_cast<std::size_t>(t)];
    s.uplink_rates_bps = {in.rates[static_cast<std::size_t>(t)][0], in.rates[static_cast<std::size_t>(t)][1]};
}

inline double step_cost(const offload::SystemState& s, int a, const Instance& in) {
    return offload::generalized_cost(offload::candidate_latency(s, a), s.task, in.cost);
}

/// Exact impact of `a` at step t: the next task with its true rates against the successor.
inline double exact_impact(const offload::SystemState& s, int a, int t, const Instance& in) {
    if (t >= 2) return 0.0;
    const auto next = offload::virtual_transition(s, a, in.cost.slot_seconds);
    offload::FutureTask f;
    f.task = s.task;
    f.task.size_bits = in.sizes[static_cast<std::size_t>(t + 1)];
    f.uplink_rates_bps = {in.rates[static_cast<std::size_t>(t + 1)][0], in.rates[static_cast<std::size_t>(t + 1)][1]};
    return offload::impact_of(next, std::span<const offload::FutureTask>(&f, 1), in.cost);
}

/// Total J of a fixed action sequence. With `lambda` > 0 the exact impact term is added.
inline double rollout(const Instance& in, const std::array<int, 3>& actions, double lambda = 0.0) {
    auto s = initial(in);
    double total = 0.0;
    for (int t = 0; t < 3; ++t) {
        load_task(s, in, t);
        const int a = actions[static_cast<std::size_t>(t)];
        total += step_cost(s, a, in) + lambda * exact_impact(s, a, t, in);
        s = offload::virtual_transition(s, a, in.cost.slot_seconds);
    }
    return total;
}

inline double optimum(const Instance& in) {
    double best = 1e300;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c) best = std::min(best, rollout(in, {a, b, c}));
    return best;
}

/// Greedy on J + lambda * exact impact; lambda = 0 is the one-step oracle.
inline double greedy_total(const Instance& in, double lambda) {
    auto s = initial(in);
    double total = 0.0;
    for (int t = 0; t < 3; ++t) {
        load_task(s, in, t);
        int best = 0;
        double best_score = 1e300;
        for (int a = 0; a < 3; ++a) {
            const double score = step_cost(s, a, in) + lambda * exact_impact(s, a, t, in);
            if (score < best_score) {
                best_score = score;
                best = a;
            }
        }
        total += step_cost(s, best, in);
        s = offload::virtual_transition(s, best, in.cost.slot_seconds);
    }
    return total;
}

}  // namespace micro

#include "offload/oracle.hpp"

namespace offload {

std::vector<ActionCost> evaluate_all(const SystemState& state, const CostParams& params) {
    std::vector<ActionCost> out;
    out.reserve(static_cast<std::size_t>(state.num_actions()));
    for (int a = 0; a < state.num_actions(); ++a) {
        out.push_back({a, generalized_cost(candidate_latency(state, a), state.task, params)});
    }
    return out;
}

ActionCost oracle_action(const SystemState& state, const CostParams& params) {
    ActionCost best{0, generalized_cost(candidate_latency(state, 0), state.task, params)};
    for (int a = 1; a < state.num_actions(); ++a) {
        const double c = generalized_cost(candidate_latency(state, a), state.task, params);
        if (c < best.cost) best = {a, c};
    }
    return best;
}

double oracle_cost(const SystemState& state, const CostParams& params) {
    return oracle_action(state, params).cost;
}

}  // namespace offload

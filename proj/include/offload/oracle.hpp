#pragma once

#include <vector>

#include "offload/system_model.hpp"

namespace offload {

struct ActionCost {
    int action = 0;
    double cost = 0.0;
};

/// Generalized cost of every action 0..E for the state's task.
std::vector<ActionCost> evaluate_all(const SystemState& state, const CostParams& params);

/// One-step optimal action; ties go to the lowest index.
ActionCost oracle_action(const SystemState& state, const CostParams& params);

/// Minimum one-step cost, without materializing the full list.
double oracle_cost(const SystemState& state, const CostParams& params);

}  // namespace offload

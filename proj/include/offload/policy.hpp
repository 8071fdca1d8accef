#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "offload/simulator.hpp"

namespace offload {

/// Per-candidate feature layout. One weight vector scores every candidate,
/// so the same parameters serve any number of servers.
enum Feature : int {
    kUploadSlots = 0,
    kWaitSlots,
    kExecSlots,
    kCapacity,
    kActiveTasks,
    kBacklog,
    kBacklogTrend,
    kIsLocal,
    kBias,
    kFeatureDim
};

using FeatureVector = std::array<double, kFeatureDim>;
using CandidateFeatures = FeatureVector;

// Fixed normalization references, shared across topologies.
inline constexpr double kCapacityRefHz = 48e9;
inline constexpr double kBacklogRefBits = 50e6;
inline constexpr double kActiveRef = 10.0;

struct PolicyParams {
    FeatureVector weights{};
    double temperature = 1.0;
    nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

    /// Throws NumericError on non-finite weights or non-positive temperature.
    void validate() const;
};

/// One feature vector per action 0..E. Latency features are in slots.
std::vector<CandidateFeatures> featurize(const SystemState& state, double slot_seconds);

/// Softmax of theta . phi_a / temperature over the candidates.
std::vector<double> action_distribution(const PolicyParams& params, std::span<const CandidateFeatures> features);
std::vector<double> log_action_distribution(const PolicyParams& params,
                                            std::span<const CandidateFeatures> features);

/// grad_theta log pi(action) = (phi_a - E_pi[phi]) / temperature.
FeatureVector log_prob_gradient(const PolicyParams& params, std::span<const CandidateFeatures> features,
                                int action);

/// KL(p || q) over a discrete support; both must be strictly positive where p is.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Total variation distance, 0.5 * sum |p - q|.
double total_variation(std::span<const double> p, std::span<const double> q);

enum class ScorerMode { greedy, sample };

/// Decision function backed by the scorer. Greedy picks the most probable
/// action (lowest index on ties); sample draws from the distribution.
DecisionFn make_scorer_policy(PolicyParams params, double slot_seconds, ScorerMode mode = ScorerMode::greedy,
                              std::uint64_t seed = 0);

enum class BaselineKind { random, local_only, round_robin, least_loaded, greedy_oracle };

std::string to_string(BaselineKind kind);
/// Accepts the enum names plus "oracle" as an alias; throws ConfigError("baseline").
BaselineKind baseline_from_string(std::string_view name);

/// Heuristic policies. `seed` feeds the random baseline only.
DecisionFn make_baseline(BaselineKind kind, const CostParams& cost, std::uint64_t seed = 0);

void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);
nlohmann::ordered_json params_to_json(const PolicyParams& params);
PolicyParams params_from_json(const nlohmann::json& j);

}  // namespace offload

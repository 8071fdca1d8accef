#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "offload/serializer.hpp"
#include "offload/simulator.hpp"

namespace offload {

struct MetricsReport {
    double avg_latency_slots = 0.0;  // AL, mean generalized cost in slots
    double drop_rate = 0.0;          // TDR in [0, 1]
    double perf_ratio = 0.0;         // PR, mean oracle cost / mean policy cost
    /// Jain index over edge assignments; empty when no task was offloaded.
    std::optional<double> load_balance;
    /// Index 0 = local, index e = server e.
    std::vector<int> per_action_counts;
    int n_samples = 0;
    double oracle_avg_cost = 0.0;
};

double avg_latency(std::span<const double> costs);
/// Fraction with cost > deadline. Lengths must match.
double drop_rate(std::span<const double> costs, std::span<const double> deadlines);
double perf_ratio(std::span<const double> policy_costs, std::span<const double> oracle_costs);
/// (sum x)^2 / (W sum x^2) over `counts` (one entry per server). Throws on all-zero counts.
double load_balance(std::span<const int> counts, int num_servers);

/// Aggregates pooled records of several traces. All traces must share a topology.
MetricsReport metrics_from_traces(std::span<const EpisodeTrace> traces);

/// Deterministic per-episode seeds derived from `base_seed`.
std::vector<std::uint64_t> episode_seeds(std::uint64_t base_seed, int episodes);

/// Runs one episode per seed (in parallel when `parallel`) and aggregates.
MetricsReport evaluate_policy(const PolicyFactory& policy, const SimConfig& config,
                              std::span<const std::uint64_t> seeds, bool parallel = true);
/// Convenience overload using episode_seeds(config.seed, episodes).
MetricsReport evaluate_policy(const PolicyFactory& policy, const SimConfig& config, int episodes,
                              bool parallel = true);

nlohmann::ordered_json report_to_json(const MetricsReport& report);

/// Wraps a policy so it only sees the state after a render/parse round trip
/// through the given prompt style. Noise seeds advance per decision.
PolicyFactory through_prompt(PolicyFactory inner, PromptMode mode, double slot_seconds);

enum class SweepAxis { task_size, servers, perturbation };

std::string to_string(SweepAxis axis);
/// Throws ConfigError("axis") for unknown names.
SweepAxis sweep_axis_from_string(std::string_view name);

struct NamedPolicy {
    std::string name;
    PolicyFactory factory;
};

struct SweepRow {
    std::string policy;
    std::string axis_value;
    MetricsReport report;
};

/// Axis values: task sizes {2,4,6,8,10} Mbit (fixed size), server counts
/// {3,5,7,9,11}, or the four prompt modes.
std::vector<std::string> sweep_values(SweepAxis axis);

/// Evaluates every policy at every axis value with paired seeds and streams
/// rows to `out` as CSV. On failure an "# error" row is written, the stream
/// flushed, and the error rethrown.
std::vector<SweepRow> sweep(std::span<const NamedPolicy> policies, SweepAxis axis, const SimConfig& base,
                            int episodes, std::ostream& out);

/// Same, writing to `path`.
std::vector<SweepRow> sweep(std::span<const NamedPolicy> policies, SweepAxis axis, const SimConfig& base,
                            int episodes, const std::string& path);

inline constexpr const char* kReportHeader = "policy,axis,AL,TDR,PR,LBI";

/// One CSV line: AL with 4 decimals, percentages with 2.
std::string format_row(const std::string& policy, const std::string& axis_value, const MetricsReport& report);

}  // namespace offload

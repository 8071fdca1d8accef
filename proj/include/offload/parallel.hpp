#pragma once

// Data-parallel kernels. Each has a serial reference with identical output;
// tests compare the two and the benchmark times them.

#include <cstdint>
#include <span>
#include <vector>

#include "offload/lacs.hpp"
#include "offload/simulator.hpp"

namespace offload::kernels {

/// Number of worker threads the OpenMP kernels will use (1 without OpenMP).
int max_threads();

/// One episode per seed; trace i uses seeds[i] for both the environment and the policy.
std::vector<EpisodeTrace> run_episodes_serial(const PolicyFactory& policy, const SimConfig& config,
                                              std::span<const std::uint64_t> seeds);
std::vector<EpisodeTrace> run_episodes_parallel(const PolicyFactory& policy, const SimConfig& config,
                                                std::span<const std::uint64_t> seeds);

/// One candidate action to be rewarded. `seed` drives its private LACS stream.
struct CandidateJob {
    const SystemState* state = nullptr;
    int action = 0;
    std::uint64_t seed = 0;
};

/// Reward of each job: -J when `use_lacs` is false, otherwise the shaped reward.
std::vector<double> score_candidates_serial(std::span<const CandidateJob> jobs, const LacsConfig& lacs,
                                            const LacsContext& ctx, bool use_lacs);
std::vector<double> score_candidates_parallel(std::span<const CandidateJob> jobs, const LacsConfig& lacs,
                                              const LacsContext& ctx, bool use_lacs);

}  // namespace offload::kernels

#include "offload/parallel.hpp"

#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "offload/system_model.hpp"

namespace offload::kernels {

namespace {

EpisodeTrace run_one(const PolicyFactory& policy, SimConfig config, std::uint64_t seed) {
    config.seed = seed;
    Environment env(config);
    return run_episode(env, policy(seed));
}

double score_one(const CandidateJob& job, const LacsConfig& lacs, const LacsContext& ctx, bool use_lacs) {
    const SystemState& s = *job.state;
    const double cost = generalized_cost(candidate_latency(s, job.action), s.task, ctx.cost);
    if (!use_lacs) return -cost;
    Rng rng(job.seed);
    return shaped_reward(cost, impact(s, job.action, lacs, ctx, rng), lacs);
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

std::vector<EpisodeTrace> run_episodes_serial(const PolicyFactory& policy, const SimConfig& config,
                                              std::span<const std::uint64_t> seeds) {
    std::vector<EpisodeTrace> out;
    out.reserve(seeds.size());
    for (auto seed : seeds) out.push_back(run_one(policy, config, seed));
    return out;
}

std::vector<EpisodeTrace> run_episodes_parallel(const PolicyFactory& policy, const SimConfig& config,
                                                std::span<const std::uint64_t> seeds) {
    const auto n = static_cast<std::int64_t>(seeds.size());
    std::vector<EpisodeTrace> out(seeds.size());
    std::vector<std::exception_ptr> errors(seeds.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            out[static_cast<std::size_t>(i)] = run_one(policy, config, seeds[static_cast<std::size_t>(i)]);
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    // Report the lowest-index failure so errors match the serial kernel.
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

std::vector<double> score_candidates_serial(std::span<const CandidateJob> jobs, const LacsConfig& lacs,
                                            const LacsContext& ctx, bool use_lacs) {
    std::vector<double> out(jobs.size());
    for (std::size_t i = 0; i < jobs.size(); ++i) out[i] = score_one(jobs[i], lacs, ctx, use_lacs);
    return out;
}

std::vector<double> score_candidates_parallel(std::span<const CandidateJob> jobs, const LacsConfig& lacs,
                                              const LacsContext& ctx, bool use_lacs) {
    const auto n = static_cast<std::int64_t>(jobs.size());
    std::vector<double> out(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            out[k] = score_one(jobs[k], lacs, ctx, use_lacs);
        } catch (...) {
            errors[k] = std::current_exception();
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

}  // namespace offload::kernels

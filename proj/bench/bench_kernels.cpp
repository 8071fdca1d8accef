// Serial reference vs OpenMP kernels: episode rollouts and candidate scoring.

#include <benchmark/benchmark.h>

#include "offload/evaluation.hpp"
#include "offload/parallel.hpp"
#include "offload/policy.hpp"

using namespace offload;

namespace {

const PolicyFactory kOracle = [](std::uint64_t) { return make_baseline(BaselineKind::greedy_oracle, {}, 0); };

template <bool Parallel>
void BM_Episodes(benchmark::State& st) {
    const SimConfig cfg;
    const auto seeds = episode_seeds(1, static_cast<int>(st.range(0)));
    for (auto _ : st) {
        auto traces = Parallel ? kernels::run_episodes_parallel(kOracle, cfg, seeds)
                               : kernels::run_episodes_serial(kOracle, cfg, seeds);
        benchmark::DoNotOptimize(traces.data());
    }
    st.SetItemsProcessed(st.iterations() * st.range(0));
    st.counters["threads"] = Parallel ? kernels::max_threads() : 1;
}

struct Jobs {
    std::vector<SystemState> states;
    std::vector<kernels::CandidateJob> jobs;
};

Jobs make_jobs(int n_states) {
    Jobs j;
    SimConfig cfg;
    for (const auto& r : generate_dataset(cfg, n_states, {})) j.states.push_back(state_from_json(r.state_digest));
    Rng rng(5);
    for (const auto& s : j.states) {
        for (int i = 0; i < 8; ++i) {
            j.jobs.push_back({&s, static_cast<int>(rng.index(static_cast<std::uint64_t>(s.num_actions()))), rng.next()});
        }
    }
    return j;
}

template <bool Parallel>
void BM_Score(benchmark::State& st) {
    const auto j = make_jobs(static_cast<int>(st.range(0)));
    const bool lacs = st.range(1) != 0;
    const SimConfig cfg;
    const LacsContext ctx{cfg.cost_params(), cfg.rate_sampler(), cfg.num_users};
    for (auto _ : st) {
        auto r = Parallel ? kernels::score_candidates_parallel(j.jobs, LacsConfig{}, ctx, lacs)
                          : kernels::score_candidates_serial(j.jobs, LacsConfig{}, ctx, lacs);
        benchmark::DoNotOptimize(r.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(j.jobs.size()));
}

}  // namespace

BENCHMARK(BM_Episodes<false>)->Name("episodes/serial")->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Episodes<true>)->Name("episodes/parallel")->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Score<false>)->Name("score/serial")->Args({32, 0})->Args({32, 1})->Args({256, 1})->UseRealTime();
BENCHMARK(BM_Score<true>)->Name("score/parallel")->Args({32, 0})->Args({32, 1})->Args({256, 1})->UseRealTime();

BENCHMARK_MAIN();

#include "offload/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "offload/oracle.hpp"
#include "offload/parallel.hpp"

namespace offload {

double avg_latency(std::span<const double> costs) {
    if (costs.empty()) throw Error("avg_latency: no samples");
    double acc = 0.0;
    for (double c : costs) acc += c;
    return acc / static_cast<double>(costs.size());
}

double drop_rate(std::span<const double> costs, std::span<const double> deadlines) {
    if (costs.empty()) throw Error("drop_rate: no samples");
    if (costs.size() != deadlines.size()) throw Error("drop_rate: costs and deadlines differ in length");
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < costs.size(); ++i) {
        if (costs[i] > deadlines[i]) ++dropped;
    }
    return static_cast<double>(dropped) / static_cast<double>(costs.size());
}

double perf_ratio(std::span<const double> policy_costs, std::span<const double> oracle_costs) {
    if (policy_costs.size() != oracle_costs.size()) throw Error("perf_ratio: lists differ in length");
    const double al = avg_latency(policy_costs);
    if (!(al > 0.0)) throw Error("perf_ratio: policy average latency is zero");
    return avg_latency(oracle_costs) / al;
}

double load_balance(std::span<const int> counts, int num_servers) {
    if (num_servers < 1) throw Error("load_balance: need at least one server");
    if (static_cast<int>(counts.size()) != num_servers) throw Error("load_balance: counts length must equal W");
    double sum = 0.0;
    double sq = 0.0;
    for (int c : counts) {
        sum += c;
        sq += static_cast<double>(c) * c;
    }
    if (sq == 0.0) throw Error("load_balance: undefined when no server received work");
    return sum * sum / (num_servers * sq);
}

MetricsReport metrics_from_traces(std::span<const EpisodeTrace> traces) {
    MetricsReport r;
    if (traces.empty()) throw Error("metrics: no traces");
    const int e = traces.front().config.num_servers;
    r.per_action_counts.assign(static_cast<std::size_t>(e + 1), 0);

    std::vector<double> costs;
    std::vector<double> deadlines;
    std::vector<double> oracle;
    for (const auto& t : traces) {
        if (t.config.num_servers != e) throw Error("metrics: traces mix topologies");
        const CostParams cp = t.config.cost_params();
        for (const auto& rec : t.records) {
            costs.push_back(rec.cost);
            deadlines.push_back(rec.state.task.deadline_slots);
            oracle.push_back(oracle_cost(rec.state, cp));
            ++r.per_action_counts[static_cast<std::size_t>(rec.action)];
        }
    }
    r.n_samples = static_cast<int>(costs.size());
    if (costs.empty()) throw Error("metrics: episodes produced no tasks");
    r.avg_latency_slots = avg_latency(costs);
    r.drop_rate = drop_rate(costs, deadlines);
    r.oracle_avg_cost = avg_latency(oracle);
    r.perf_ratio = perf_ratio(costs, oracle);
    std::span<const int> edge(r.per_action_counts.data() + 1, static_cast<std::size_t>(e));
    bool any = false;
    for (int c : edge) any = any || c > 0;
    if (any) r.load_balance = load_balance(edge, e);
    return r;
}

std::vector<std::uint64_t> episode_seeds(std::uint64_t base_seed, int episodes) {
    if (episodes < 1) throw ConfigError("episodes", "must be at least 1");
    std::vector<std::uint64_t> out;
    for (int i = 0; i < episodes; ++i) {
        out.push_back(derive_seed(derive_seed(base_seed, streams::episodes), static_cast<std::uint64_t>(i)));
    }
    return out;
}

MetricsReport evaluate_policy(const PolicyFactory& policy, const SimConfig& config,
                              std::span<const std::uint64_t> seeds, bool parallel) {
    if (seeds.empty()) throw ConfigError("episodes", "must be at least 1");
    config.validate();
    const auto traces = parallel ? kernels::run_episodes_parallel(policy, config, seeds)
                                 : kernels::run_episodes_serial(policy, config, seeds);
    return metrics_from_traces(traces);
}

MetricsReport evaluate_policy(const PolicyFactory& policy, const SimConfig& config, int episodes, bool parallel) {
    const auto seeds = episode_seeds(config.seed, episodes);
    return evaluate_policy(policy, config, seeds, parallel);
}

nlohmann::ordered_json report_to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["AL"] = r.avg_latency_slots;
    j["TDR"] = r.drop_rate;
    j["PR"] = r.perf_ratio;
    j["LBI"] = r.load_balance ? nlohmann::ordered_json(*r.load_balance) : nlohmann::ordered_json(nullptr);
    j["per_action_counts"] = r.per_action_counts;
    j["n_samples"] = r.n_samples;
    j["oracle_AL"] = r.oracle_avg_cost;
    return j;
}

PolicyFactory through_prompt(PolicyFactory inner, PromptMode mode, double slot_seconds) {
    return [inner = std::move(inner), mode, slot_seconds](std::uint64_t seed) -> DecisionFn {
        auto decide = inner(seed);
        auto rng = std::make_shared<Rng>(Rng::stream(seed, streams::perturbation));
        return [decide, rng, mode, slot_seconds](const SystemState& s) {
            PromptStyle style;
            style.mode = mode;
            style.noise_seed = rng->next();
            ParsedPrompt parsed = parse_prompt(serialize(s, slot_seconds, style));
            parsed.state.task.id = s.task.id;
            parsed.state.task.user = s.task.user;
            parsed.state.slot = s.slot;
            return decide(parsed.state);
        };
    };
}

std::string to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::task_size: return "task_size";
        case SweepAxis::servers: return "servers";
        case SweepAxis::perturbation: return "perturbation";
    }
    return "task_size";
}

SweepAxis sweep_axis_from_string(std::string_view name) {
    for (auto a : {SweepAxis::task_size, SweepAxis::servers, SweepAxis::perturbation}) {
        if (to_string(a) == name) return a;
    }
    throw ConfigError("axis", "unknown sweep axis '" + std::string(name) + "'");
}

std::vector<std::string> sweep_values(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::task_size: return {"2", "4", "6", "8", "10"};
        case SweepAxis::servers: return {"3", "5", "7", "9", "11"};
        case SweepAxis::perturbation:
            return {to_string(PromptMode::standard), to_string(PromptMode::shuffled_params),
                    to_string(PromptMode::noisy_text), to_string(PromptMode::unit_variation)};
    }
    return {};
}

namespace {

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

}  // namespace

std::string format_row(const std::string& policy, const std::string& axis_value, const MetricsReport& r) {
    std::string row = policy + "," + axis_value + "," + fixed(r.avg_latency_slots, 4) + "," +
                      fixed(100.0 * r.drop_rate, 2) + "," + fixed(100.0 * r.perf_ratio, 2) + ",";
    row += r.load_balance ? fixed(100.0 * *r.load_balance, 2) : std::string("NA");
    return row;
}

std::vector<SweepRow> sweep(std::span<const NamedPolicy> policies, SweepAxis axis, const SimConfig& base,
                            int episodes, std::ostream& out) {
    std::vector<SweepRow> rows;
    out << kReportHeader << '\n';
    try {
        const auto seeds = episode_seeds(base.seed, episodes);
        for (const auto& value : sweep_values(axis)) {
            SimConfig cfg = base;
            if (axis == SweepAxis::task_size) {
                cfg.size_min_bits = cfg.size_max_bits = std::stod(value) * 1e6;
            } else if (axis == SweepAxis::servers) {
                cfg.num_servers = std::stoi(value);
                cfg.capacities_hz.clear();
            }
            for (const auto& p : policies) {
                PolicyFactory factory = p.factory;
                if (axis == SweepAxis::perturbation) {
                    factory = through_prompt(p.factory, prompt_mode_from_string(value), cfg.slot_seconds);
                }
                SweepRow row{p.name, to_string(axis) + "=" + value, evaluate_policy(factory, cfg, seeds)};
                out << format_row(row.policy, row.axis_value, row.report) << '\n';
                out.flush();
                rows.push_back(std::move(row));
            }
        }
    } catch (const std::exception& ex) {
        out << "# error: " << ex.what() << '\n';
        out.flush();
        throw;
    }
    return rows;
}

std::vector<SweepRow> sweep(std::span<const NamedPolicy> policies, SweepAxis axis, const SimConfig& base,
                            int episodes, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open report for writing: " + path);
    return sweep(policies, axis, base, episodes, f);
}

}  // namespace offload

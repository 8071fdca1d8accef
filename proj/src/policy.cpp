#include "offload/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>

#include "offload/oracle.hpp"

namespace offload {

namespace {

/// Least-squares slope of the history samples, in bits per sample.
double history_slope(const std::vector<double>& h) {
    const auto n = static_cast<double>(h.size());
    if (h.size() < 2) return 0.0;
    const double mean_x = (n - 1.0) / 2.0;
    double mean_y = 0.0;
    for (double v : h) mean_y += v;
    mean_y /= n;
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double dx = static_cast<double>(i) - mean_x;
        num += dx * (h[i] - mean_y);
        den += dx * dx;
    }
    return num / den;
}

std::vector<double> scores(const PolicyParams& params, std::span<const CandidateFeatures> features) {
    std::vector<double> s(features.size());
    for (std::size_t a = 0; a < features.size(); ++a) {
        double acc = 0.0;
        for (int k = 0; k < kFeatureDim; ++k) acc += params.weights[k] * features[a][k];
        s[a] = acc / params.temperature;
    }
    return s;
}

}  // namespace

void PolicyParams::validate() const {
    for (double w : weights) {
        if (!std::isfinite(w)) throw NumericError("policy weights must be finite");
    }
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw NumericError("temperature must be positive");
}

std::vector<CandidateFeatures> featurize(const SystemState& state, double slot_seconds) {
    std::vector<CandidateFeatures> out(static_cast<std::size_t>(state.num_actions()));
    for (int a = 0; a < state.num_actions(); ++a) {
        const LatencyTerms t = candidate_latency_terms(state, a);
        auto& f = out[static_cast<std::size_t>(a)];
        f[kUploadSlots] = t.upload_s / slot_seconds;
        f[kWaitSlots] = t.wait_s / slot_seconds;
        f[kExecSlots] = t.exec_s / slot_seconds;
        if (a == 0) {
            f[kCapacity] = state.device.local_freq_hz / kCapacityRefHz;
            f[kActiveTasks] = 0.0;
            f[kBacklog] = state.device.local_backlog_bits / kBacklogRefBits;
            f[kBacklogTrend] = 0.0;
            f[kIsLocal] = 1.0;
        } else {
            const auto& s = state.servers[static_cast<std::size_t>(a - 1)];
            f[kCapacity] = s.capacity_hz / kCapacityRefHz;
            f[kActiveTasks] = s.active_tasks / kActiveRef;
            f[kBacklog] = s.backlog_bits / kBacklogRefBits;
            f[kBacklogTrend] = history_slope(s.history) / kBacklogRefBits;
            f[kIsLocal] = 0.0;
        }
        f[kBias] = 1.0;
    }
    return out;
}

std::vector<double> log_action_distribution(const PolicyParams& params,
                                            std::span<const CandidateFeatures> features) {
    auto s = scores(params, features);
    if (s.empty()) return s;
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double v : s) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    for (auto& v : s) v -= log_z;
    return s;
}

std::vector<double> action_distribution(const PolicyParams& params, std::span<const CandidateFeatures> features) {
    auto s = scores(params, features);
    if (s.empty()) return s;
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (auto& v : s) {
        v = std::exp(v - mx);
        z += v;
    }
    for (auto& v : s) v /= z;
    return s;
}

FeatureVector log_prob_gradient(const PolicyParams& params, std::span<const CandidateFeatures> features,
                                int action) {
    if (action < 0 || action >= static_cast<int>(features.size())) {
        throw InvalidActionError(action, static_cast<int>(features.size()) - 1);
    }
    const auto p = action_distribution(params, features);
    FeatureVector g = features[static_cast<std::size_t>(action)];
    for (std::size_t b = 0; b < features.size(); ++b) {
        for (int k = 0; k < kFeatureDim; ++k) g[k] -= p[b] * features[b][k];
    }
    for (auto& v : g) v /= params.temperature;
    return g;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) kl += p[i] * (std::log(p[i]) - std::log(q[i]));
    }
    return std::max(kl, 0.0);
}

double total_variation(std::span<const double> p, std::span<const double> q) {
    double tv = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
    return 0.5 * tv;
}

DecisionFn make_scorer_policy(PolicyParams params, double slot_seconds, ScorerMode mode, std::uint64_t seed) {
    params.validate();
    if (mode == ScorerMode::greedy) {
        return [params, slot_seconds](const SystemState& s) {
            const auto p = action_distribution(params, featurize(s, slot_seconds));
            return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
        };
    }
    auto rng = std::make_shared<Rng>(Rng::stream(seed, streams::policy));
    return [params, slot_seconds, rng](const SystemState& s) {
        return rng->categorical(action_distribution(params, featurize(s, slot_seconds)));
    };
}

std::string to_string(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::random: return "random";
        case BaselineKind::local_only: return "local_only";
        case BaselineKind::round_robin: return "round_robin";
        case BaselineKind::least_loaded: return "least_loaded";
        case BaselineKind::greedy_oracle: return "greedy_oracle";
    }
    return "random";
}

BaselineKind baseline_from_string(std::string_view name) {
    if (name == "oracle") return BaselineKind::greedy_oracle;
    for (auto k : {BaselineKind::random, BaselineKind::local_only, BaselineKind::round_robin,
                   BaselineKind::least_loaded, BaselineKind::greedy_oracle}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("baseline", "unknown baseline '" + std::string(name) + "'");
}

DecisionFn make_baseline(BaselineKind kind, const CostParams& cost, std::uint64_t seed) {
    switch (kind) {
        case BaselineKind::random: {
            auto rng = std::make_shared<Rng>(Rng::stream(seed, streams::baseline));
            return [rng](const SystemState& s) {
                return static_cast<int>(rng->index(static_cast<std::uint64_t>(s.num_actions())));
            };
        }
        case BaselineKind::local_only:
            return [](const SystemState&) { return 0; };
        case BaselineKind::round_robin: {
            auto next = std::make_shared<int>(0);
            return [next](const SystemState& s) {
                if (s.num_servers() == 0) return 0;
                const int a = (*next % s.num_servers()) + 1;
                ++*next;
                return a;
            };
        }
        case BaselineKind::least_loaded:
            return [](const SystemState& s) {
                int best = 0;
                double best_load = 0.0;
                for (int e = 0; e < s.num_servers(); ++e) {
                    const auto& srv = s.servers[static_cast<std::size_t>(e)];
                    const double load = srv.backlog_bits / srv.capacity_hz;
                    if (best == 0 || load < best_load) {
                        best = e + 1;
                        best_load = load;
                    }
                }
                return best;
            };
        case BaselineKind::greedy_oracle:
            return [cost](const SystemState& s) { return oracle_action(s, cost).action; };
    }
    return [](const SystemState&) { return 0; };
}

nlohmann::ordered_json params_to_json(const PolicyParams& params) {
    nlohmann::ordered_json j;
    j["dimension"] = static_cast<int>(kFeatureDim);
    j["weights"] = params.weights;
    j["temperature"] = params.temperature;
    j["metadata"] = params.metadata;
    return j;
}

PolicyParams params_from_json(const nlohmann::json& j) {
    if (j.at("dimension").get<int>() != kFeatureDim) {
        throw ConfigError("dimension", "checkpoint dimension does not match the feature layout");
    }
    PolicyParams p;
    const auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(kFeatureDim)) throw ConfigError("weights", "wrong length");
    std::copy(w.begin(), w.end(), p.weights.begin());
    p.temperature = j.at("temperature").get<double>();
    if (j.contains("metadata")) p.metadata = j.at("metadata");
    p.validate();
    return p;
}

void save_checkpoint(const PolicyParams& params, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path);
    f << params_to_json(params).dump(2) << '\n';
    if (!f) throw IoError("failed writing checkpoint: " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    try {
        return params_from_json(nlohmann::json::parse(f));
    } catch (const nlohmann::json::exception& ex) {
        throw IoError("malformed checkpoint " + path + ": " + ex.what());
    }
}

}  // namespace offload

#include "offload/training.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "offload/oracle.hpp"
#include "offload/parallel.hpp"

namespace offload {

void TrainConfig::validate() const {
    auto require = [](bool ok, const char* field, const char* what) {
        if (!ok) throw ConfigError(field, what);
    };
    require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate", "must be positive");
    require(group_size >= 2, "group_size", "must be at least 2");
    require(clip_eps > 0.0 && clip_eps < 1.0, "clip_eps", "must lie in (0, 1)");
    require(kl_coeff >= 0.0, "kl_coeff", "must be non-negative");
    require(discount > 0.0 && discount < 1.0, "discount", "must lie in (0, 1)");
    require(adv_eps > 0.0, "adv_eps", "must be positive");
    require(iterations >= 0, "iterations", "must be non-negative");
    require(batch_states >= 1, "batch_states", "must be at least 1");
    require(eval_interval >= 0, "eval_interval", "must be non-negative");
    require(eval_episodes >= 1, "eval_episodes", "must be at least 1");
    require(sft_epochs >= 0, "sft_epochs", "must be non-negative");
    require(sft_step > 0.0, "sft_step", "must be positive");
}

namespace {

FeatureVector mean_features(std::span<const CandidateFeatures> features, const std::vector<double>& p) {
    FeatureVector m{};
    for (std::size_t a = 0; a < features.size(); ++a) {
        for (int k = 0; k < kFeatureDim; ++k) m[k] += p[a] * features[a][k];
    }
    return m;
}

void axpy(FeatureVector& y, double a, const FeatureVector& x) {
    for (int k = 0; k < kFeatureDim; ++k) y[k] += a * x[k];
}

double squared_norm(const FeatureVector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

bool all_finite(const FeatureVector& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

FeatureVector sft_gradient(const PolicyParams& params, std::span<const LabeledSample> data) {
    FeatureVector g{};
    for (const auto& s : data) axpy(g, -1.0, log_prob_gradient(params, s.features, s.label));
    for (auto& v : g) v /= static_cast<double>(data.size());
    return g;
}

bool clip_active(double ratio, double adv, double eps) {
    return (adv > 0.0 && ratio > 1.0 + eps) || (adv < 0.0 && ratio < 1.0 - eps);
}

void check_group(const GroupSample& g) {
    if (g.actions.size() != g.rewards.size() || g.actions.size() != g.log_prob_old.size()) {
        throw ConfigError("batch", "group fields differ in length");
    }
    if (g.actions.size() < 2) throw ConfigError("group_size", "must be at least 2");
    for (int a : g.actions) {
        if (a < 0 || a >= static_cast<int>(g.features.size())) {
            throw InvalidActionError(a, static_cast<int>(g.features.size()) - 1);
        }
    }
}

}  // namespace

std::vector<LabeledSample> labeled_samples(std::span<const DatasetRecord> records) {
    std::vector<LabeledSample> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        const ParsedPrompt parsed = parse_prompt(r.prompt);
        out.push_back({featurize(parsed.state, parsed.slot_seconds), r.label_action});
    }
    return out;
}

double sft_loss(const PolicyParams& params, std::span<const LabeledSample> data) {
    if (data.empty()) throw ConfigError("dataset", "must not be empty");
    double acc = 0.0;
    for (const auto& s : data) {
        if (s.label < 0 || s.label >= static_cast<int>(s.features.size())) {
            throw InvalidActionError(s.label, static_cast<int>(s.features.size()) - 1);
        }
        acc -= log_action_distribution(params, s.features)[static_cast<std::size_t>(s.label)];
    }
    return acc / static_cast<double>(data.size());
}

double sft_accuracy(const PolicyParams& params, std::span<const LabeledSample> data) {
    if (data.empty()) throw ConfigError("dataset", "must not be empty");
    std::size_t hits = 0;
    for (const auto& s : data) {
        const auto p = action_distribution(params, s.features);
        if (std::max_element(p.begin(), p.end()) - p.begin() == s.label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

SftResult sft_fit(std::span<const LabeledSample> data, const PolicyParams& init, const TrainConfig& config) {
    init.validate();
    SftResult result{init, {}};
    double loss = sft_loss(init, data);
    result.loss_history.push_back(loss);
    double step = config.sft_step;

    for (int epoch = 0; epoch < config.sft_epochs; ++epoch) {
        const FeatureVector g = sft_gradient(result.params, data);
        const double gg = squared_norm(g);
        if (!std::isfinite(gg)) throw NumericError("sft gradient is not finite");
        if (gg < 1e-18) break;

        bool accepted = false;
        for (int tries = 0; tries < 60 && !accepted; ++tries) {
            PolicyParams trial = result.params;
            axpy(trial.weights, -step, g);
            const double trial_loss = sft_loss(trial, data);
            if (std::isfinite(trial_loss) && trial_loss <= loss - 1e-4 * step * gg) {
                result.params = trial;
                loss = trial_loss;
                accepted = true;
            } else {
                step *= 0.5;
            }
        }
        if (!accepted) break;
        result.loss_history.push_back(loss);
        step *= 2.0;
    }
    return result;
}

std::vector<GroupDraw> sample_group(const PolicyParams& policy, std::span<const CandidateFeatures> features,
                                    int group_size, Rng& rng) {
    if (group_size < 2) throw ConfigError("group_size", "must be at least 2");
    const auto p = action_distribution(policy, features);
    const auto logp = log_action_distribution(policy, features);
    std::vector<GroupDraw> out;
    out.reserve(static_cast<std::size_t>(group_size));
    for (int i = 0; i < group_size; ++i) {
        const int a = rng.categorical(p);
        out.push_back({a, logp[static_cast<std::size_t>(a)]});
    }
    return out;
}

std::vector<double> group_advantages(std::span<const double> rewards, double adv_eps) {
    if (rewards.size() < 2) throw ConfigError("group_size", "must be at least 2");
    const auto n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> out;
    out.reserve(rewards.size());
    for (double r : rewards) out.push_back((r - mean) / (sd + adv_eps));
    return out;
}

GroupSample make_group(const PolicyParams& old_policy, std::vector<CandidateFeatures> features, int group_size,
                       Rng& rng, const std::function<double(int)>& reward) {
    GroupSample g;
    g.old_probs = action_distribution(old_policy, features);
    for (const auto& d : sample_group(old_policy, features, group_size, rng)) {
        g.actions.push_back(d.action);
        g.log_prob_old.push_back(d.log_prob_old);
        g.rewards.push_back(reward(d.action));
    }
    g.features = std::move(features);
    return g;
}

double grpo_objective(const PolicyParams& policy, const PolicyParams& ref, std::span<const GroupSample> batch,
                      const TrainConfig& config) {
    if (batch.empty()) throw ConfigError("batch", "must not be empty");
    double total = 0.0;
    for (const auto& g : batch) {
        check_group(g);
        const auto adv = group_advantages(g.rewards, config.adv_eps);
        const auto logp = log_action_distribution(policy, g.features);
        double surr = 0.0;
        for (std::size_t i = 0; i < g.actions.size(); ++i) {
            const double ratio = std::exp(logp[static_cast<std::size_t>(g.actions[i])] - g.log_prob_old[i]);
            const double clipped = std::clamp(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
            surr += std::min(ratio * adv[i], clipped * adv[i]);
        }
        surr /= static_cast<double>(g.actions.size());
        const auto p = action_distribution(policy, g.features);
        const auto q = action_distribution(ref, g.features);
        total += surr - config.kl_coeff * kl_divergence(p, q);
    }
    return total / static_cast<double>(batch.size());
}

FeatureVector grpo_gradient(const PolicyParams& policy, const PolicyParams& ref, std::span<const GroupSample> batch,
                            const TrainConfig& config) {
    if (batch.empty()) throw ConfigError("batch", "must not be empty");
    FeatureVector grad{};
    for (const auto& g : batch) {
        check_group(g);
        const auto adv = group_advantages(g.rewards, config.adv_eps);
        const auto p = action_distribution(policy, g.features);
        const auto logp = log_action_distribution(policy, g.features);
        const auto logq = log_action_distribution(ref, g.features);
        const FeatureVector mean = mean_features(g.features, p);
        const double inv_t = 1.0 / policy.temperature;
        const double inv_g = 1.0 / static_cast<double>(g.actions.size());

        for (std::size_t i = 0; i < g.actions.size(); ++i) {
            const auto a = static_cast<std::size_t>(g.actions[i]);
            const double ratio = std::exp(logp[a] - g.log_prob_old[i]);
            if (clip_active(ratio, adv[i], config.clip_eps)) continue;
            const double w = inv_g * adv[i] * ratio * inv_t;
            for (int k = 0; k < kFeatureDim; ++k) grad[k] += w * (g.features[a][k] - mean[k]);
        }
        for (std::size_t a = 0; a < g.features.size(); ++a) {
            const double w = -config.kl_coeff * p[a] * (logp[a] - logq[a]) * inv_t;
            for (int k = 0; k < kFeatureDim; ++k) grad[k] += w * (g.features[a][k] - mean[k]);
        }
    }
    for (auto& v : grad) v /= static_cast<double>(batch.size());
    return grad;
}

UpdateResult grpo_update(const PolicyParams& policy, const PolicyParams& ref, std::span<const GroupSample> batch,
                         const TrainConfig& config) {
    config.validate();
    policy.validate();
    const FeatureVector grad = grpo_gradient(policy, ref, batch, config);
    if (!all_finite(grad)) throw NumericError("GRPO gradient is not finite; update rejected");

    UpdateResult out{policy, {}};
    axpy(out.params.weights, config.learning_rate, grad);
    if (!all_finite(out.params.weights)) throw NumericError("GRPO step produced non-finite weights; update rejected");

    auto& d = out.diagnostics;
    d.surrogate_value = grpo_objective(policy, ref, batch, config);
    std::size_t samples = 0;
    std::size_t clipped = 0;
    for (const auto& g : batch) {
        const auto adv = group_advantages(g.rewards, config.adv_eps);
        const auto logp = log_action_distribution(policy, g.features);
        for (std::size_t i = 0; i < g.actions.size(); ++i) {
            d.mean_group_reward += g.rewards[i];
            d.mean_advantage += adv[i];
            const double ratio = std::exp(logp[static_cast<std::size_t>(g.actions[i])] - g.log_prob_old[i]);
            if (clip_active(ratio, adv[i], config.clip_eps)) ++clipped;
            ++samples;
        }
        const auto p_new = action_distribution(out.params, g.features);
        d.kl_to_ref += kl_divergence(p_new, action_distribution(ref, g.features));
        d.kl_to_old += g.old_probs.size() == p_new.size() ? kl_divergence(p_new, g.old_probs) : 0.0;
    }
    d.mean_group_reward /= static_cast<double>(samples);
    d.mean_advantage /= static_cast<double>(samples);
    d.mean_clip_fraction = static_cast<double>(clipped) / static_cast<double>(samples);
    d.kl_to_ref /= static_cast<double>(batch.size());
    d.kl_to_old /= static_cast<double>(batch.size());
    return out;
}

MicroMdp offloading_micro_mdp(int levels, double discount) {
    if (levels < 1 || levels * levels > kMaxExactStates) throw ConfigError("levels", "micro MDP too large");
    const double unit_bits = 4e6;
    const double capacity[2] = {30e9, 20e9};
    const double rate[2] = {16e6, 12e6};
    const double drain_prob[2] = {0.7, 0.5};
    const CostParams cost;

    MicroMdp mdp;
    mdp.discount = discount;
    const int n = levels * levels;
    auto index = [levels](int l1, int l2) { return l1 * levels + l2; };
    mdp.features.resize(static_cast<std::size_t>(n));
    mdp.reward.resize(static_cast<std::size_t>(n));
    mdp.transitions.resize(static_cast<std::size_t>(n));
    mdp.initial.assign(static_cast<std::size_t>(n), 1.0 / n);

    for (int l1 = 0; l1 < levels; ++l1) {
        for (int l2 = 0; l2 < levels; ++l2) {
            const int s = index(l1, l2);
            SystemState st;
            st.task.size_bits = unit_bits;
            st.uplink_rates_bps = {rate[0], rate[1]};
            const int lv[2] = {l1, l2};
            for (int e = 0; e < 2; ++e) {
                ServerState srv;
                srv.id = e + 1;
                srv.capacity_hz = capacity[e];
                srv.active_tasks = lv[e];
                srv.backlog_bits = lv[e] * unit_bits;
                st.servers.push_back(srv);
            }
            mdp.features[static_cast<std::size_t>(s)] = featurize(st, cost.slot_seconds);

            for (int a = 0; a < st.num_actions(); ++a) {
                mdp.reward[static_cast<std::size_t>(s)].push_back(
                    -generalized_cost(candidate_latency(st, a), st.task, cost));
                int after[2] = {l1, l2};
                if (a > 0) after[a - 1] = std::min(after[a - 1] + 1, levels - 1);
                std::vector<MicroMdp::Edge> edges;
                for (int d1 = 0; d1 < 2; ++d1) {
                    for (int d2 = 0; d2 < 2; ++d2) {
                        const int drains[2] = {d1, d2};
                        double p = 1.0;
                        int next[2];
                        for (int e = 0; e < 2; ++e) {
                            if (after[e] == 0) {
                                p *= drains[e] == 0 ? 1.0 : 0.0;
                                next[e] = 0;
                            } else {
                                p *= drains[e] == 1 ? drain_prob[e] : 1.0 - drain_prob[e];
                                next[e] = after[e] - drains[e];
                            }
                        }
                        if (p > 0.0) edges.push_back({index(next[0], next[1]), p});
                    }
                }
                mdp.transitions[static_cast<std::size_t>(s)].push_back(std::move(edges));
            }
        }
    }
    return mdp;
}

ExactEvaluation evaluate_exact(const MicroMdp& mdp, const PolicyParams& policy) {
    const int n = mdp.num_states();
    if (n < 1 || n > kMaxExactStates) throw ConfigError("micro_mdp", "too many states for exact evaluation");
    if (!(mdp.discount > 0.0 && mdp.discount < 1.0)) throw ConfigError("discount", "must lie in (0, 1)");
    const double eta = mdp.discount;

    ExactEvaluation ev;
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
    for (int s = 0; s < n; ++s) {
        const auto su = static_cast<std::size_t>(s);
        ev.policy.push_back(action_distribution(policy, mdp.features[su]));
        const auto& pi = ev.policy.back();
        for (std::size_t a = 0; a < pi.size(); ++a) {
            r(s) += pi[a] * mdp.reward[su][a];
            for (const auto& e : mdp.transitions[su][a]) m(s, e.next) -= eta * pi[a] * e.prob;
        }
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    const Eigen::VectorXd v = lu.solve(r);
    Eigen::VectorXd mu(n);
    for (int s = 0; s < n; ++s) mu(s) = mdp.initial[static_cast<std::size_t>(s)];
    const Eigen::VectorXd d = (1.0 - eta) * Eigen::PartialPivLU<Eigen::MatrixXd>(m.transpose()).solve(mu);

    ev.value.assign(v.data(), v.data() + n);
    ev.visitation.assign(d.data(), d.data() + n);
    ev.performance = mu.dot(v);
    for (int s = 0; s < n; ++s) {
        const auto su = static_cast<std::size_t>(s);
        std::vector<double> q;
        std::vector<double> adv;
        for (std::size_t a = 0; a < mdp.reward[su].size(); ++a) {
            double next = 0.0;
            for (const auto& e : mdp.transitions[su][a]) next += e.prob * v(e.next);
            q.push_back(mdp.reward[su][a] + eta * next);
            adv.push_back(q.back() - v(s));
        }
        ev.q.push_back(std::move(q));
        ev.advantage.push_back(std::move(adv));
    }
    return ev;
}

BoundReport improvement_bound_check(const PolicyParams& pi_old, const PolicyParams& pi_new, const MicroMdp& mdp) {
    const ExactEvaluation old_ev = evaluate_exact(mdp, pi_old);
    const ExactEvaluation new_ev = evaluate_exact(mdp, pi_new);
    const double eta = mdp.discount;

    BoundReport b;
    b.v_old = old_ev.performance;
    b.v_new = new_ev.performance;
    b.max_pinsker_gap = -1.0;
    for (std::size_t s = 0; s < old_ev.policy.size(); ++s) {
        const auto& p_new = new_ev.policy[s];
        const auto& p_old = old_ev.policy[s];
        double ea = 0.0;
        for (std::size_t a = 0; a < p_new.size(); ++a) {
            ea += p_new[a] * old_ev.advantage[s][a];
            b.max_abs_advantage = std::max(b.max_abs_advantage, std::abs(old_ev.advantage[s][a]));
        }
        b.expected_advantage += old_ev.visitation[s] * ea;
        const double kl = kl_divergence(p_new, p_old);
        b.max_kl = std::max(b.max_kl, kl);
        b.max_pinsker_gap = std::max(b.max_pinsker_gap, total_variation(p_new, p_old) - std::sqrt(kl / 2.0));
    }
    b.bound_constant = 2.0 * eta * b.max_abs_advantage / ((1.0 - eta) * (1.0 - eta)) * std::sqrt(0.5);
    b.lower_bound = b.v_old + b.expected_advantage / (1.0 - eta) - b.bound_constant * std::sqrt(b.max_kl);
    b.slack = b.v_new - b.lower_bound;
    // Tolerance covers round-off in the linear solves.
    const double tol = 1e-9 * std::max(1.0, std::abs(b.v_old));
    b.bound_holds = b.slack >= -tol;
    b.pinsker_holds = b.max_pinsker_gap <= 1e-12;
    return b;
}

std::vector<GroupSample> micro_mdp_batch(const MicroMdp& mdp, const ExactEvaluation& old_eval,
                                         const PolicyParams& old_policy, int group_size, int num_states,
                                         Rng& rng) {
    std::vector<GroupSample> batch;
    for (int i = 0; i < num_states; ++i) {
        const auto s = static_cast<std::size_t>(rng.categorical(old_eval.visitation));
        const auto& q = old_eval.q[s];
        batch.push_back(make_group(old_policy, mdp.features[s], group_size, rng,
                                   [&q](int a) { return q[static_cast<std::size_t>(a)]; }));
    }
    return batch;
}

nlohmann::ordered_json log_entry_to_json(const TrainLogEntry& e) {
    nlohmann::ordered_json j;
    j["iteration"] = e.iteration;
    j["mean_reward"] = e.diagnostics.mean_group_reward;
    j["mean_advantage"] = e.diagnostics.mean_advantage;
    j["kl_to_ref"] = e.diagnostics.kl_to_ref;
    j["kl_to_old"] = e.diagnostics.kl_to_old;
    j["clip_fraction"] = e.diagnostics.mean_clip_fraction;
    j["surrogate"] = e.diagnostics.surrogate_value;
    if (e.diagnostics.improvement_lower_bound) j["improvement_lower_bound"] = *e.diagnostics.improvement_lower_bound;
    if (e.eval) j["eval"] = report_to_json(*e.eval);
    return j;
}

PolicyFactory scorer_factory(const PolicyParams& params, double slot_seconds) {
    return [params, slot_seconds](std::uint64_t) { return make_scorer_policy(params, slot_seconds); };
}

TrainResult train(const SimConfig& env_config, const TrainConfig& config, const LacsConfig& lacs, bool use_lacs,
                  std::span<const LabeledSample> sft_data, const TrainHooks& hooks) {
    env_config.validate();
    config.validate();
    lacs.validate();

    TrainResult result;
    if (!sft_data.empty()) {
        SftResult sft = sft_fit(sft_data, PolicyParams{}, config);
        result.params = sft.params;
        result.sft_loss = std::move(sft.loss_history);
    }
    result.reference = result.params;
    result.reference.metadata = nlohmann::ordered_json::object();
    PolicyParams last_good = result.params;

    const double dt = env_config.slot_seconds;
    const LacsContext ctx{env_config.cost_params(), env_config.rate_sampler(), env_config.num_users};
    const std::uint64_t env_base = derive_seed(config.seed, streams::environment);
    Rng policy_rng = Rng::stream(config.seed, streams::policy);
    Rng lacs_rng = Rng::stream(config.seed, lacs.seed_stream);
    const auto eval_seeds = episode_seeds(derive_seed(config.seed, streams::episodes), config.eval_episodes);

    std::uint64_t episode = 0;
    auto fresh_env = [&] {
        SimConfig c = env_config;
        c.seed = derive_seed(env_base, episode++);
        return Environment(c);
    };
    Environment env = fresh_env();
    std::vector<Task> pending;

    auto snapshot = [&](const PolicyParams& p) {
        return evaluate_policy(scorer_factory(p, dt), env_config, eval_seeds, config.parallel);
    };

    try {
        for (int it = 1; it <= config.iterations; ++it) {
            // Collect states on-policy from the live environment.
            std::vector<SystemState> states;
            while (static_cast<int>(states.size()) < config.batch_states) {
                if (pending.empty()) {
                    if (env.slot() >= env_config.episode_slots) env = fresh_env();
                    pending = env.sample_arrivals();
                    std::reverse(pending.begin(), pending.end());
                    continue;
                }
                const Task task = pending.back();
                pending.pop_back();
                SystemState s = env.observe(task);
                const int a = policy_rng.categorical(action_distribution(result.params, featurize(s, dt)));
                env.step(task, a);
                states.push_back(std::move(s));
            }
            if (hooks.on_batch) hooks.on_batch(states);

            // Draw the groups, then score every candidate with its own LACS sub-stream.
            std::vector<GroupSample> batch;
            std::vector<kernels::CandidateJob> jobs;
            for (const auto& s : states) {
                GroupSample g;
                g.features = featurize(s, dt);
                g.old_probs = action_distribution(result.params, g.features);
                const std::uint64_t state_seed = lacs_rng.next();
                const auto draws = sample_group(result.params, g.features, config.group_size, policy_rng);
                for (std::size_t i = 0; i < draws.size(); ++i) {
                    g.actions.push_back(draws[i].action);
                    g.log_prob_old.push_back(draws[i].log_prob_old);
                    jobs.push_back({&s, draws[i].action, derive_seed(state_seed, i)});
                }
                batch.push_back(std::move(g));
            }
            const auto rewards = config.parallel ? kernels::score_candidates_parallel(jobs, lacs, ctx, use_lacs)
                                                 : kernels::score_candidates_serial(jobs, lacs, ctx, use_lacs);
            std::size_t k = 0;
            for (auto& g : batch) {
                for (std::size_t i = 0; i < g.actions.size(); ++i) g.rewards.push_back(rewards[k++]);
            }

            UpdateResult up = grpo_update(result.params, result.reference, batch, config);
            result.params = up.params;  // pi_old follows pi_theta after every batch
            last_good = result.params;

            TrainLogEntry entry{it, up.diagnostics, std::nullopt};
            const bool eval_now = (config.eval_interval > 0 && it % config.eval_interval == 0) ||
                                  it == config.iterations;
            if (eval_now) entry.eval = snapshot(result.params);
            if (hooks.on_log) hooks.on_log(entry);
            result.log.push_back(std::move(entry));
        }
    } catch (...) {
        if (hooks.on_abort) hooks.on_abort(last_good);
        throw;
    }
    return result;
}

}  // namespace offload

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "offload/evaluation.hpp"
#include "offload/lacs.hpp"
#include "offload/policy.hpp"
#include "offload/serializer.hpp"
#include "offload/simulator.hpp"

namespace offload {

struct TrainConfig {
    // Large-model fine-tuning uses 5e-6; a linear scorer needs a far larger step.
    double learning_rate = 1e-2;
    int group_size = 8;
    double clip_eps = 0.2;
    double kl_coeff = 0.005;
    double discount = 0.99;
    double adv_eps = 1e-4;
    int iterations = 300;
    int batch_states = 32;
    int eval_interval = 50;
    int eval_episodes = 4;
    std::uint64_t seed = 7;
    int sft_epochs = 20;  // early stop: a fully converged fit collapses the policy
    double sft_step = 1.0;  // initial step of the backtracking line search
    bool parallel = true;

    void validate() const;
};

struct UpdateDiagnostics {
    double mean_group_reward = 0.0;
    double mean_advantage = 0.0;
    double mean_clip_fraction = 0.0;
    double kl_to_old = 0.0;   // after the step
    double kl_to_ref = 0.0;   // after the step
    double surrogate_value = 0.0;  // before the step
    std::optional<double> improvement_lower_bound;
};

/// Candidate features of one state with its oracle label.
struct LabeledSample {
    std::vector<CandidateFeatures> features;
    int label = 0;
};

/// Features are rebuilt from each record's prompt, as a text policy would see it.
std::vector<LabeledSample> labeled_samples(std::span<const DatasetRecord> records);

/// Mean -log pi(label).
double sft_loss(const PolicyParams& params, std::span<const LabeledSample> data);
/// Fraction of samples whose label is the most probable action.
double sft_accuracy(const PolicyParams& params, std::span<const LabeledSample> data);

struct SftResult {
    PolicyParams params;
    std::vector<double> loss_history;  // one entry per epoch, starting with the initial loss
};

/// Full-batch gradient descent with an Armijo backtracking step, so the loss
/// never increases between epochs. Throws ConfigError on empty data and
/// InvalidActionError on out-of-range labels.
SftResult sft_fit(std::span<const LabeledSample> data, const PolicyParams& init, const TrainConfig& config);

struct GroupDraw {
    int action = 0;
    double log_prob_old = 0.0;
};

/// G independent draws from the policy over the given candidates.
std::vector<GroupDraw> sample_group(const PolicyParams& policy, std::span<const CandidateFeatures> features,
                                    int group_size, Rng& rng);

/// (r_i - mean) / (population std + adv_eps).
std::vector<double> group_advantages(std::span<const double> rewards, double adv_eps);

/// One state's group: candidates, the sampling distribution, the G draws and their rewards.
struct GroupSample {
    std::vector<CandidateFeatures> features;
    std::vector<double> old_probs;
    std::vector<int> actions;
    std::vector<double> log_prob_old;
    std::vector<double> rewards;
};

/// Builds a group by sampling from `old_policy` and scoring with `reward(action)`.
GroupSample make_group(const PolicyParams& old_policy, std::vector<CandidateFeatures> features, int group_size,
                       Rng& rng, const std::function<double(int)>& reward);

/// Batch mean of (1/G) sum_i min(rho A, clip(rho) A) - beta KL(pi || pi_ref).
double grpo_objective(const PolicyParams& policy, const PolicyParams& ref, std::span<const GroupSample> batch,
                      const TrainConfig& config);

/// Analytic gradient of grpo_objective with respect to the weights.
FeatureVector grpo_gradient(const PolicyParams& policy, const PolicyParams& ref,
                            std::span<const GroupSample> batch, const TrainConfig& config);

struct UpdateResult {
    PolicyParams params;
    UpdateDiagnostics diagnostics;
};

/// One ascent step. Throws NumericError if the gradient or the new weights are
/// not finite; the input parameters are never modified.
UpdateResult grpo_update(const PolicyParams& policy, const PolicyParams& ref, std::span<const GroupSample> batch,
                         const TrainConfig& config);

/// Small MDP with enumerable states, solved exactly.
struct MicroMdp {
    struct Edge {
        int next = 0;
        double prob = 0.0;
    };
    std::vector<std::vector<CandidateFeatures>> features;  // [state][action]
    std::vector<std::vector<double>> reward;               // [state][action]
    std::vector<std::vector<std::vector<Edge>>> transitions;  // [state][action]
    std::vector<double> initial;
    double discount = 0.9;

    int num_states() const { return static_cast<int>(features.size()); }
};

inline constexpr int kMaxExactStates = 200;

/// Two servers whose queues take `levels` discrete backlog levels; each
/// decision adds one level to the chosen server and every busy server then
/// drains one level with a server-specific probability. Rewards are negative
/// generalized costs of the corresponding system state.
MicroMdp offloading_micro_mdp(int levels = 5, double discount = 0.9);

struct ExactEvaluation {
    std::vector<std::vector<double>> policy;  // [state][action]
    std::vector<double> value;
    std::vector<std::vector<double>> q;
    std::vector<std::vector<double>> advantage;
    std::vector<double> visitation;  // normalized discounted state visitation from `initial`
    double performance = 0.0;        // sum_s initial(s) V(s)
};

/// Solves the Bellman equations with a dense LU factorization. Throws
/// ConfigError("micro_mdp") above kMaxExactStates states.
ExactEvaluation evaluate_exact(const MicroMdp& mdp, const PolicyParams& policy);

struct BoundReport {
    double v_old = 0.0;
    double v_new = 0.0;
    double expected_advantage = 0.0;  // E_{s~d_old, a~pi_new} A_old(s, a)
    double max_abs_advantage = 0.0;
    double max_kl = 0.0;              // max_s KL(pi_new || pi_old)
    double bound_constant = 0.0;
    double lower_bound = 0.0;
    double slack = 0.0;               // v_new - lower_bound
    double max_pinsker_gap = 0.0;     // max_s TV - sqrt(KL / 2); <= 0 when Pinsker holds
    bool bound_holds = false;
    bool pinsker_holds = false;
};

BoundReport improvement_bound_check(const PolicyParams& pi_old, const PolicyParams& pi_new, const MicroMdp& mdp);

/// One group per state drawn from the old policy's visitation; candidate
/// rewards are the old policy's exact Q-values.
std::vector<GroupSample> micro_mdp_batch(const MicroMdp& mdp, const ExactEvaluation& old_eval,
                                         const PolicyParams& old_policy, int group_size, int num_states,
                                         Rng& rng);

struct TrainLogEntry {
    int iteration = 0;
    UpdateDiagnostics diagnostics;
    std::optional<MetricsReport> eval;
};

nlohmann::ordered_json log_entry_to_json(const TrainLogEntry& entry);

struct TrainResult {
    PolicyParams params;
    PolicyParams reference;
    std::vector<double> sft_loss;
    std::vector<TrainLogEntry> log;
};

struct TrainHooks {
    std::function<void(const TrainLogEntry&)> on_log;
    /// Called with the last good parameters before an error propagates.
    std::function<void(const PolicyParams&)> on_abort;
    /// Called with each batch's states before scoring.
    std::function<void(std::span<const SystemState>)> on_batch;
};

/// SFT on `sft_data` (skipped when empty: zero weights and a uniform
/// reference), then `config.iterations` GRPO updates on states collected
/// from live episodes. `use_lacs` selects shaped rewards over -J.
TrainResult train(const SimConfig& env_config, const TrainConfig& config, const LacsConfig& lacs, bool use_lacs,
                  std::span<const LabeledSample> sft_data, const TrainHooks& hooks = {});

/// Greedy decision factory for a trained scorer.
PolicyFactory scorer_factory(const PolicyParams& params, double slot_seconds);

}  // namespace offload

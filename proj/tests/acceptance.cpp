// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <chrono>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "json.hpp"
#include "micro_instance.hpp"
#include "offload/evaluation.hpp"
#include "offload/oracle.hpp"
#include "offload/policy.hpp"
#include "offload/remote_policy.hpp"
#include "offload/serializer.hpp"
#include "offload/training.hpp"

using namespace offload;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

/// Runs one criterion; the runtime budget is part of the verdict.
void criterion(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& ex) {
        o = {false, std::string("exception: ") + ex.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_time = secs < budget_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::printf("AC%d %s %s: %s [%.2fs of %.0fs%s]\n", id, pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs,
                budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool rel_ok(double got, double want, double tol) { return std::abs(got - want) <= tol * std::abs(want); }

PolicyFactory baseline(BaselineKind kind, const SimConfig& cfg) {
    const CostParams cost = cfg.cost_params();
    return [kind, cost](std::uint64_t seed) { return make_baseline(kind, cost, seed); };
}

class ScriptedTransport : public Transport {
public:
    explicit ScriptedTransport(std::deque<HttpResponse> script) : script_(std::move(script)) {}
    HttpResponse post(const std::string&, const std::string&, const Headers&, std::chrono::milliseconds) override {
        auto r = script_.front();
        if (script_.size() > 1) script_.pop_front();
        if (r.status < 0) throw RemoteError("connection refused");
        return r;
    }

private:
    std::deque<HttpResponse> script_;
};

std::string completion(const std::string& text) {
    return nlohmann::json{{"choices", {{{"message", {{"content", text}}}}}}}.dump();
}

// Models shared by the training criteria.
struct Trained {
    PolicyParams sft;
    std::vector<PolicyParams> plain;  // lambda = 0
    std::vector<PolicyParams> lacs;
};

}  // namespace

int main() {
    const SimConfig defaults;

    criterion(1, "physics examples", 1.0, [] {
        Task t;
        t.size_bits = 2e6;
        const double local = local_latency(t, DeviceState{2e9, 0.0});

        Task big;
        big.size_bits = 4e6;
        SystemState s;
        s.task = big;
        s.device = {2e9, 0.0};
        s.servers = {{1, 20e9, 1, 5e6, {}}};
        s.uplink_rates_bps = {14e6};
        const double edge = candidate_latency(s, 1);

        const double eff = effective_rate(ServerState{1, 24e9, 2, 0.0, {}});
        const double backlog = virtual_transition(s, 1, 0.1).servers[0].backlog_bits;
        Task late;
        late.deadline_slots = 10.0;
        const double cost = generalized_cost(1.2, late, CostParams{10.0, 0.1});

        const bool ok = rel_ok(local, 0.297, 1e-4) && rel_ok(edge, 0.5530, 1e-4) && rel_ok(eff, 8e9, 1e-4) &&
                        rel_ok(backlog, 5.6330e6, 1e-4) && rel_ok(cost, 22.0, 1e-4);
        return Outcome{ok, fmt("local %.6f s, edge %.6f s, f_eff %.4g Hz, backlog %.6f Mbit, J %.4f", local, edge,
                               eff, backlog / 1e6, cost)};
    });

    criterion(2, "oracle PR identity", 10.0, [&] {
        const auto r = evaluate_policy(baseline(BaselineKind::greedy_oracle, defaults), defaults, 20);
        return Outcome{r.perf_ratio == 1.0, fmt("PR = %.17g over %d decisions", r.perf_ratio, r.n_samples)};
    });

    criterion(3, "simulator conservation", 30.0, [&] {
        double worst = 0.0;
        double min_backlog = 0.0;
        int min_active = 0;
        for (std::uint64_t seed = 1; seed <= 100; ++seed) {
            SimConfig c = defaults;
            c.seed = seed;
            Environment env(c);
            const auto trace = run_episode(env, make_baseline(BaselineKind::random, c.cost_params(), seed));
            for (const auto& l : trace.ledgers) {
                const double rhs = l.drained_bits + l.final_backlog_bits;
                worst = std::max(worst, std::abs(l.admitted_bits - rhs) / std::max(l.admitted_bits, 1.0));
                min_backlog = std::min(min_backlog, l.min_backlog_bits);
                min_active = std::min(min_active, l.min_active_tasks);
            }
        }
        const bool ok = worst <= 1e-6 && min_backlog >= 0.0 && min_active >= 0;
        return Outcome{ok, fmt("max relative imbalance %.3g, min backlog %.3g, min active %d", worst, min_backlog,
                               min_active)};
    });

    criterion(4, "log-prob gradient vs finite differences", 5.0, [] {
        Rng rng(404);
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            const auto f = featurize(testutil::random_state(rng, 1 + static_cast<int>(rng.index(11))), 0.1);
            PolicyParams p;
            for (auto& w : p.weights) w = rng.uniform(-0.5, 0.5);
            const int a = static_cast<int>(rng.index(f.size()));
            const auto g = log_prob_gradient(p, f, a);
            for (int k = 0; k < kFeatureDim; ++k) {
                auto hi = p;
                auto lo = p;
                hi.weights[k] += 1e-5;
                lo.weights[k] -= 1e-5;
                const double fd = (log_action_distribution(hi, f)[static_cast<std::size_t>(a)] -
                                   log_action_distribution(lo, f)[static_cast<std::size_t>(a)]) /
                                  2e-5;
                worst = std::max(worst, std::abs(fd - g[k]));
            }
        }
        return Outcome{worst < 1e-6, fmt("max abs error %.3g over 100 triples", worst)};
    });

    criterion(5, "GRPO mechanics", 5.0, [] {
        Rng rng(505);
        double adv_sum = 0.0;
        double ratio_err = 0.0;
        double self_kl = 0.0;
        int clip_violations = 0;
        for (int i = 0; i < 1000; ++i) {
            PolicyParams p;
            for (auto& w : p.weights) w = rng.uniform(-0.5, 0.5);
            auto g = make_group(p, featurize(testutil::random_state(rng, 1 + static_cast<int>(rng.index(11))), 0.1),
                                8, rng, [&rng](int) { return -rng.uniform(0.0, 40.0); });
            const auto adv = group_advantages(g.rewards, 1e-4);
            adv_sum = std::max(adv_sum, std::abs(std::accumulate(adv.begin(), adv.end(), 0.0)));
            const auto logp = log_action_distribution(p, g.features);
            const auto probs = action_distribution(p, g.features);
            self_kl = std::max(self_kl, kl_divergence(probs, probs));
            // A perturbed policy for the clipping comparison.
            PolicyParams q = p;
            for (auto& w : q.weights) w += rng.uniform(-0.3, 0.3);
            const auto logq = log_action_distribution(q, g.features);
            for (std::size_t j = 0; j < g.actions.size(); ++j) {
                const auto a = static_cast<std::size_t>(g.actions[j]);
                ratio_err = std::max(ratio_err, std::abs(std::exp(logp[a] - g.log_prob_old[j]) - 1.0));
                const double rho = std::exp(logq[a] - g.log_prob_old[j]);
                const double clipped = std::min(rho * adv[j], std::clamp(rho, 0.8, 1.2) * adv[j]);
                if (clipped > rho * adv[j]) ++clip_violations;
            }
        }
        const bool ok = adv_sum < 1e-10 && ratio_err < 1e-12 && self_kl == 0.0 && clip_violations == 0;
        return Outcome{ok, fmt("max |sum A| %.3g, max |rho-1| %.3g, KL(pi||pi) %.3g, clip violations %d", adv_sum,
                               ratio_err, self_kl, clip_violations)};
    });

    criterion(6, "policy improvement lower bound", 60.0, [] {
        const auto mdp = offloading_micro_mdp();
        TrainConfig tc;
        Rng rng(606);
        PolicyParams old;
        int held = 0;
        int pinsker = 0;
        double min_slack = 1e300;
        double v_first = evaluate_exact(mdp, old).performance;
        for (int it = 0; it < 100; ++it) {
            const auto ev = evaluate_exact(mdp, old);
            const auto batch = micro_mdp_batch(mdp, ev, old, tc.group_size, tc.batch_states, rng);
            const auto next = grpo_update(old, PolicyParams{}, batch, tc).params;
            const auto rep = improvement_bound_check(old, next, mdp);
            held += rep.bound_holds;
            pinsker += rep.pinsker_holds;
            min_slack = std::min(min_slack, rep.slack);
            old = next;
        }
        const double v_last = evaluate_exact(mdp, old).performance;
        return Outcome{held == 100 && pinsker == 100,
                       fmt("%d states, bound held %d/100, Pinsker held %d/100, min slack %.4g, V %.4f -> %.4f",
                           mdp.num_states(), held, pinsker, min_slack, v_first, v_last)};
    });

    criterion(7, "look-ahead beats one-step greedy on a congestion instance", 10.0, [] {
        const micro::Instance in;
        const double opt = micro::optimum(in);
        const double lacs = micro::greedy_total(in, LacsConfig{}.lambda_weight);
        const double greedy = micro::greedy_total(in, 0.0);
        const bool ok = lacs <= 1.05 * opt && (greedy - opt) > (lacs - opt);
        return Outcome{ok, fmt("optimum %.4f, look-ahead %.4f (+%.2f%%), greedy %.4f (+%.2f%%)", opt, lacs,
                               100 * (lacs / opt - 1), greedy, 100 * (greedy / opt - 1))};
    });

    // Training criteria share one set of models.
    SimConfig high = defaults;
    high.size_min_bits = high.size_max_bits = 8e6;
    const auto eval_seeds = episode_seeds(2024, 20);
    Trained models;
    std::vector<double> train_secs;

    criterion(8, "training effect at high load", 600.0, [&] {
        const auto data = labeled_samples(generate_dataset(defaults, 1000, {}));
        TrainConfig tc;
        tc.iterations = 500;
        tc.eval_interval = 0;
        models.sft = sft_fit(data, PolicyParams{}, tc).params;
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            tc.seed = seed;
            models.plain.push_back(train(high, tc, LacsConfig{}, false, data).params);
            models.lacs.push_back(train(high, tc, LacsConfig{}, true, data).params);
        }
        auto mean_report = [&](const std::vector<PolicyParams>& ps) {
            double al = 0.0;
            double tdr = 0.0;
            for (const auto& p : ps) {
                const auto r = evaluate_policy(scorer_factory(p, high.slot_seconds), high, eval_seeds);
                al += r.avg_latency_slots / static_cast<double>(ps.size());
                tdr += r.drop_rate / static_cast<double>(ps.size());
            }
            return std::pair{al, tdr};
        };
        const auto [al_plain, tdr_plain] = mean_report(models.plain);
        const auto [al_lacs, tdr_lacs] = mean_report(models.lacs);
        const auto rnd = evaluate_policy(baseline(BaselineKind::random, high), high, eval_seeds);
        const bool ok = al_lacs <= 1.02 * al_plain && al_lacs <= 0.85 * rnd.avg_latency_slots &&
                        al_plain <= 0.85 * rnd.avg_latency_slots && tdr_lacs <= rnd.drop_rate;
        return Outcome{ok, fmt("AL lacs %.4f, plain %.4f, random %.4f; TDR lacs %.4f, plain %.4f, random %.4f "
                               "(3 seeds x 500 updates, 20 episodes)",
                               al_lacs, al_plain, rnd.avg_latency_slots, tdr_lacs, tdr_plain, rnd.drop_rate)};
    });

    criterion(9, "zero-shot topology transfer", 300.0, [&] {
        if (models.lacs.empty()) return Outcome{false, "no trained models"};
        bool ok = true;
        std::string detail;
        for (int e : {3, 9, 11}) {
            SimConfig c = defaults;
            c.num_servers = e;
            double pr = 0.0;
            for (const auto& p : models.lacs) {
                pr += evaluate_policy(scorer_factory(p, c.slot_seconds), c, eval_seeds).perf_ratio /
                      static_cast<double>(models.lacs.size());
            }
            const double pr_rnd = evaluate_policy(baseline(BaselineKind::random, c), c, eval_seeds).perf_ratio;
            ok = ok && pr >= pr_rnd + 0.10;
            detail += fmt("%sE=%d PR %.2f%% vs random %.2f%%", detail.empty() ? "" : "; ", e, 100 * pr, 100 * pr_rnd);
        }
        return Outcome{ok, detail};
    });

    criterion(10, "load balance on 11 servers", 180.0, [&] {
        if (models.lacs.empty()) return Outcome{false, "no trained models"};
        SimConfig c = defaults;
        c.num_servers = 11;
        bool bounds = true;
        auto lbi_of = [&](const MetricsReport& r) {
            if (!r.load_balance) {
                bounds = false;
                return 0.0;
            }
            bounds = bounds && *r.load_balance >= 1.0 / 11 - 1e-12 && *r.load_balance <= 1.0 + 1e-12;
            return *r.load_balance;
        };
        double lbi = 0.0;
        for (const auto& p : models.lacs) {
            lbi += lbi_of(evaluate_policy(scorer_factory(p, c.slot_seconds), c, eval_seeds)) /
                   static_cast<double>(models.lacs.size());
        }
        const auto sft = evaluate_policy(scorer_factory(models.sft, c.slot_seconds), c, eval_seeds);
        const double lbi_sft = lbi_of(sft);
        lbi_of(evaluate_policy(baseline(BaselineKind::random, c), c, eval_seeds));
        lbi_of(evaluate_policy(baseline(BaselineKind::round_robin, c), c, eval_seeds));
        const double local_share = sft.per_action_counts[0] / static_cast<double>(sft.n_samples);
        return Outcome{bounds && lbi >= lbi_sft,
                       fmt("LBI lacs %.8f vs SFT-only %.8f (SFT local share %.2f%%); bounds %s", lbi, lbi_sft,
                           100 * local_share, bounds ? "held" : "violated")};
    });

    criterion(11, "serializer round trip", 30.0, [&] {
        Rng rng(1111);
        int mismatches = 0;
        const PromptMode modes[] = {PromptMode::standard, PromptMode::shuffled_params, PromptMode::noisy_text,
                                    PromptMode::unit_variation};
        for (int i = 0; i < 1000; ++i) {
            auto s = testutil::random_state(rng, 1 + static_cast<int>(rng.index(11)));
            s.task.deadline_slots = defaults.deadline_slots;
            const int want = oracle_action(s, defaults.cost_params()).action;
            for (auto m : modes) {
                const auto parsed = parse_prompt(serialize(s, defaults.slot_seconds, {m, rng.next(), 8}));
                mismatches += oracle_action(parsed.state, defaults.cost_params()).action != want;
            }
        }
        const auto dir = testutil::scratch_dir("acceptance");
        auto bytes = [](const std::filesystem::path& p) {
            std::ifstream f(p, std::ios::binary);
            return std::string(std::istreambuf_iterator<char>(f), {});
        };
        PromptStyle noisy{PromptMode::noisy_text, 3, 8};
        export_dataset(defaults, 300, noisy, (dir / "a.jsonl").string());
        export_dataset(defaults, 300, noisy, (dir / "b.jsonl").string());
        SimConfig other = defaults;
        other.seed = defaults.seed + 1;
        export_dataset(other, 300, noisy, (dir / "c.jsonl").string());
        const bool same = bytes(dir / "a.jsonl") == bytes(dir / "b.jsonl");
        const bool differs = bytes(dir / "a.jsonl") != bytes(dir / "c.jsonl");
        return Outcome{mismatches == 0 && same && differs,
                       fmt("%d/4000 oracle mismatches; export byte-identical per seed: %s, differs across seeds: %s",
                           mismatches, same ? "yes" : "no", differs ? "yes" : "no")};
    });

    criterion(12, "remote-policy parser and stubbed endpoint", 5.0, [&] {
        int label_errors = 0;
        for (const auto& r : generate_dataset(defaults, 1000, {})) {
            label_errors += parse_decision(r.label_text, defaults.num_servers) != r.label_action;
        }
        for (int e = 1; e <= 11; ++e) {
            for (int a = 0; a <= e; ++a) label_errors += parse_decision(label_text(a), e) != a;
        }
        RemoteConfig rc;
        rc.url = "http://stub.invalid/v1/chat/completions";
        rc.max_retries = 2;
        Rng rng(12);
        const auto s = testutil::random_state(rng, 6);
        auto policy_with = [&](std::deque<HttpResponse> script) {
            RemotePolicy p(rc, std::make_shared<ScriptedTransport>(std::move(script)), {}, 0.1);
            p.set_sleeper([](std::chrono::milliseconds) {});
            return p;
        };
        auto success = policy_with({{200, completion("Offload to Server 5")}});
        const bool ok_success = success.query(s) == 5;
        auto failing = policy_with({{-1, ""}, {503, ""}});
        bool ok_retry = false;
        try {
            failing.query(s);
        } catch (const RemoteError&) {
            ok_retry = failing.requests_sent() == 3;
        }
        auto garbled = policy_with({{200, completion("maybe later")}});
        bool ok_parse = false;
        try {
            garbled.query(s);
        } catch (const ParseError& e) {
            ok_parse = e.raw() == "maybe later";
        }
        auto wild = policy_with({{200, completion("Server 9")}});
        bool ok_range = false;
        try {
            wild.query(s);
        } catch (const RangeError&) {
            ok_range = true;
        }
        const bool ok = label_errors == 0 && ok_success && ok_retry && ok_parse && ok_range;
        return Outcome{ok, fmt("label round-trip errors %d; success %s, retry-then-fail %s, parse error %s, "
                               "range error %s",
                               label_errors, ok_success ? "ok" : "bad", ok_retry ? "ok" : "bad",
                               ok_parse ? "ok" : "bad", ok_range ? "ok" : "bad")};
    });

    std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
    return failures == 0 ? 0 : 1;
}

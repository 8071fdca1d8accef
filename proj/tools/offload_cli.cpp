// offload: dataset generation, training, evaluation and sweeps.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "offload/config.hpp"
#include "offload/evaluation.hpp"
#include "offload/policy.hpp"
#include "offload/remote_policy.hpp"
#include "offload/serializer.hpp"
#include "offload/training.hpp"

namespace fs = std::filesystem;
using namespace offload;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kRuntime = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool force = false;
};

RunConfig load(const Common& c) {
    RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
    if (c.seed) {
        cfg.sim.seed = *c.seed;
        cfg.train.seed = *c.seed;
    }
    cfg.validate();
    return cfg;
}

void guard_output(const std::string& path, bool force) {
    if (!path.empty() && fs::exists(path) && !force) {
        throw UsageError("refusing to overwrite " + path + " (pass --force)");
    }
}

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "JSON config with sim/train/lacs sections")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "Override the sim and train seeds");
    cmd->add_flag("--force", c.force, "Overwrite existing outputs");
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

/// "checkpoint:<path>" or a baseline name.
NamedPolicy named_policy(const std::string& entry, const RunConfig& cfg) {
    const std::string prefix = "checkpoint:";
    if (entry.rfind(prefix, 0) == 0) {
        const std::string path = entry.substr(prefix.size());
        return {fs::path(path).stem().string(), scorer_factory(load_checkpoint(path), cfg.sim.slot_seconds)};
    }
    const BaselineKind kind = baseline_from_string(entry);
    const CostParams cost = cfg.sim.cost_params();
    return {to_string(kind), [kind, cost](std::uint64_t seed) { return make_baseline(kind, cost, seed); }};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Task offloading simulator, trainer and evaluator"};
    app.require_subcommand(1);

    // gen-data
    Common gen_common;
    int gen_count = 1000;
    std::string gen_out;
    std::string gen_style = "standard";
    auto* gen = app.add_subcommand("gen-data", "Write an oracle-labelled prompt dataset (JSON lines)");
    add_common(gen, gen_common);
    gen->add_option("--count", gen_count, "Number of records")->check(CLI::PositiveNumber);
    gen->add_option("--out", gen_out, "Output path")->required();
    gen->add_option("--style", gen_style, "Prompt style")
        ->check(CLI::IsMember({"standard", "shuffled_params", "noisy_text", "unit_variation"}));

    // train
    Common train_common;
    std::string train_lacs = "on";
    std::string train_sft;
    std::string train_out;
    std::string train_log;
    std::optional<int> train_iterations;
    auto* tr = app.add_subcommand("train", "SFT then GRPO; writes a checkpoint and a training log");
    add_common(tr, train_common);
    tr->add_option("--lacs", train_lacs, "Look-ahead reward shaping")->check(CLI::IsMember({"on", "off"}));
    tr->add_option("--sft-data", train_sft, "Dataset from gen-data; omit to start from zero weights")
        ->check(CLI::ExistingFile);
    tr->add_option("--out", train_out, "Checkpoint path")->required();
    tr->add_option("--log", train_log, "Training log path (default: <out>.log.jsonl)");
    tr->add_option("--iterations", train_iterations, "Override train.iterations")->check(CLI::NonNegativeNumber);

    // eval
    Common eval_common;
    std::string eval_checkpoint;
    std::string eval_baseline;
    bool eval_remote = false;
    int eval_episodes = 20;
    std::string eval_out;
    std::string eval_style = "standard";
    std::string eval_audit;
    auto* ev = app.add_subcommand("eval", "Evaluate one policy");
    add_common(ev, eval_common);
    auto* opt_ckpt = ev->add_option("--checkpoint", eval_checkpoint, "Trained scorer")->check(CLI::ExistingFile);
    auto* opt_base = ev->add_option("--baseline", eval_baseline, "random|local_only|round_robin|least_loaded|greedy_oracle");
    auto* opt_remote = ev->add_flag("--remote", eval_remote, "Query the endpoint named by " + std::string(kEnvUrl));
    opt_ckpt->excludes(opt_base)->excludes(opt_remote);
    opt_base->excludes(opt_remote);
    ev->add_option("--episodes", eval_episodes, "Episodes")->check(CLI::PositiveNumber);
    ev->add_option("--out", eval_out, "CSV report path; a JSON summary is written next to it");
    ev->add_option("--style", eval_style, "Prompt style for --remote")
        ->check(CLI::IsMember({"standard", "shuffled_params", "noisy_text", "unit_variation"}));
    ev->add_option("--audit", eval_audit, "Audit log for --remote (default: remote_audit.jsonl)");

    // sweep
    Common sweep_common;
    std::string sweep_axis;
    std::string sweep_policies = "greedy_oracle,random";
    int sweep_episodes = 20;
    std::string sweep_out;
    auto* sw = app.add_subcommand("sweep", "Evaluate policies across task sizes, server counts or prompt styles");
    add_common(sw, sweep_common);
    sw->add_option("--axis", sweep_axis, "task_size|servers|perturbation")
        ->required()
        ->check(CLI::IsMember({"task_size", "servers", "perturbation"}));
    sw->add_option("--policies", sweep_policies, "Comma list of baselines and checkpoint:<path> entries");
    sw->add_option("--episodes", sweep_episodes, "Episodes per cell")->check(CLI::PositiveNumber);
    sw->add_option("--out", sweep_out, "CSV report path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*gen) {
            const RunConfig cfg = load(gen_common);
            guard_output(gen_out, gen_common.force);
            PromptStyle style;
            style.mode = prompt_mode_from_string(gen_style);
            style.noise_seed = cfg.sim.seed;
            export_dataset(cfg.sim, gen_count, style, gen_out);
            std::cout << "wrote " << gen_count << " records to " << gen_out << '\n';
        } else if (*tr) {
            RunConfig cfg = load(train_common);
            if (train_iterations) cfg.train.iterations = *train_iterations;
            if (train_log.empty()) train_log = train_out + ".log.jsonl";
            guard_output(train_out, train_common.force);
            guard_output(train_log, train_common.force);

            std::vector<LabeledSample> data;
            if (!train_sft.empty()) {
                const auto records = load_dataset(train_sft);
                data = labeled_samples(records);
            } else {
                std::cerr << "no --sft-data: starting from zero weights with a uniform reference\n";
            }
            std::ofstream log(train_log, std::ios::binary | std::ios::trunc);
            if (!log) throw IoError("cannot open training log: " + train_log);
            TrainHooks hooks;
            hooks.on_log = [&log](const TrainLogEntry& e) { log << log_entry_to_json(e).dump() << '\n'; };
            hooks.on_abort = [&](const PolicyParams& p) {
                PolicyParams copy = p;
                copy.metadata["aborted"] = true;
                save_checkpoint(copy, train_out);
            };
            TrainResult res = train(cfg.sim, cfg.train, cfg.lacs, train_lacs == "on", data, hooks);
            res.params.metadata["lacs"] = train_lacs == "on";
            res.params.metadata["seed"] = cfg.train.seed;
            res.params.metadata["iterations"] = cfg.train.iterations;
            res.params.metadata["num_servers"] = cfg.sim.num_servers;
            save_checkpoint(res.params, train_out);
            std::cout << "checkpoint " << train_out << ", log " << train_log << '\n';
            if (!res.log.empty() && res.log.back().eval) {
                std::cout << kReportHeader << '\n'
                          << format_row("trained", "final", *res.log.back().eval) << '\n';
            }
        } else if (*ev) {
            const RunConfig cfg = load(eval_common);
            if (eval_checkpoint.empty() && eval_baseline.empty() && !eval_remote) {
                throw UsageError("eval needs one of --checkpoint, --baseline, --remote");
            }
            guard_output(eval_out, eval_common.force);
            std::string json_out;
            if (!eval_out.empty()) {
                json_out = fs::path(eval_out).replace_extension(".json").string();
                if (json_out == eval_out) json_out += ".summary";
                guard_output(json_out, eval_common.force);
            }

            NamedPolicy policy;
            if (!eval_checkpoint.empty()) {
                policy = named_policy("checkpoint:" + eval_checkpoint, cfg);
            } else if (!eval_baseline.empty()) {
                policy = named_policy(eval_baseline, cfg);
            } else {
                RemoteConfig rc = RemoteConfig::from_env();
                rc.audit_path = eval_audit.empty() ? "remote_audit.jsonl" : eval_audit;
                PromptStyle style;
                style.mode = prompt_mode_from_string(eval_style);
                style.noise_seed = cfg.sim.seed;
                RemotePolicy remote(rc, make_http_transport(), style, cfg.sim.slot_seconds);
                policy = {"remote", [remote](std::uint64_t) mutable { return remote.decision_fn(); }};
            }
            const MetricsReport report = evaluate_policy(policy.factory, cfg.sim, eval_episodes);
            const std::string row = format_row(policy.name, "default", report);
            std::cout << kReportHeader << '\n' << row << '\n';
            if (!eval_out.empty()) {
                std::ofstream f(eval_out, std::ios::binary | std::ios::trunc);
                f << kReportHeader << '\n' << row << '\n';
                if (!f) throw IoError("failed writing " + eval_out);
                nlohmann::ordered_json summary;
                summary["policy"] = policy.name;
                summary["episodes"] = eval_episodes;
                summary["report"] = report_to_json(report);
                std::ofstream js(json_out, std::ios::binary | std::ios::trunc);
                js << summary.dump(2) << '\n';
                if (!js) throw IoError("failed writing " + json_out);
            }
        } else if (*sw) {
            const RunConfig cfg = load(sweep_common);
            guard_output(sweep_out, sweep_common.force);
            std::vector<NamedPolicy> policies;
            for (const auto& p : split_list(sweep_policies)) policies.push_back(named_policy(p, cfg));
            if (policies.empty()) throw UsageError("--policies is empty");
            const auto rows = sweep(policies, sweep_axis_from_string(sweep_axis), cfg.sim, sweep_episodes, sweep_out);
            std::cout << "wrote " << rows.size() << " rows to " << sweep_out << '\n';
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kOk;
}

// Command-line front end: train, eval, sweep, analyze.
//
// Exit codes: 0 success, 2 bad configuration or usage, 3 training aborted on
// a non-finite loss.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hypersac/checkpoint.hpp"
#include "hypersac/config.hpp"
#include "hypersac/envs.hpp"
#include "hypersac/telemetry.hpp"
#include "hypersac/trainer.hpp"

namespace {

using namespace hypersac;

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::vector<std::string> ablations;
    // -1 sentinels: flag not given, keep the config-file value.
    std::int64_t seed = -1;
    std::int64_t utd = -1;
    std::int64_t steps = -1;
    std::int64_t eval_every = -1;
    std::int64_t telemetry_every = -1;
    std::int64_t checkpoint_every = -1;
    std::string env;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "config file (key=value lines)");
    cmd->add_option("--seed", f.seed, "random seed");
    cmd->add_option("--utd", f.utd, "gradient updates per environment step");
    cmd->add_option("--env", f.env, "environment name (pendulum, pointmass)");
    cmd->add_option("--steps", f.steps, "total environment steps");
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--ablate", f.ablations, "design-study flag; may repeat")->take_all();
    cmd->add_option("--eval-every", f.eval_every, "evaluation interval in env steps");
    cmd->add_option("--telemetry-every", f.telemetry_every, "telemetry interval in updates");
    cmd->add_option("--checkpoint-every", f.checkpoint_every, "checkpoint interval in env steps");
}

TrainConfig resolve_config(const CommonFlags& f) {
    TrainConfig cfg;
    if (!f.config_path.empty()) cfg = load_config_file(f.config_path);
    if (!f.env.empty()) cfg.env = f.env;
    if (f.seed >= 0) cfg.seed = static_cast<std::uint64_t>(f.seed);
    if (f.utd >= 0) cfg.utd = f.utd;
    if (f.steps >= 0) cfg.total_steps = static_cast<std::uint64_t>(f.steps);
    if (f.eval_every >= 0) cfg.eval_interval = static_cast<std::uint64_t>(f.eval_every);
    if (f.telemetry_every >= 0) cfg.telemetry_interval = static_cast<std::uint64_t>(f.telemetry_every);
    if (f.checkpoint_every >= 0) cfg.checkpoint_interval = static_cast<std::uint64_t>(f.checkpoint_every);
    for (const auto& flag : f.ablations) cfg = ablate(cfg, flag);
    cfg.validate();
    return cfg;
}

void echo_config(const TrainConfig& cfg) {
    std::cout << "resolved configuration:\n";
    for (const auto& [k, v] : config_items(cfg)) std::cout << "  " << k << "=" << v << "\n";
    std::cout << std::flush;
}

int cmd_train(const CommonFlags& flags, const std::string& resume_path) {
    TrainConfig cfg = resolve_config(flags);
    echo_config(cfg);
    const std::string out =
        flags.out_dir.empty() ? ("runs/train_" + cfg.env + "_seed" + std::to_string(cfg.seed)) : flags.out_dir;
    Trainer trainer(cfg);
    if (!resume_path.empty()) {
        trainer.load_checkpoint(resume_path);
        std::cout << "resumed from " << resume_path << " at env step " << trainer.env_step() << "\n";
    }
    RunResult res = trainer.run(out);
    trainer.save_checkpoint(out + "/checkpoints/step_" + std::to_string(res.env_steps) + ".ckpt");
    std::printf("final evaluation return: %.9g\n", res.final_eval_return);
    std::printf("best evaluation return:  %.9g\n", res.best_eval_return);
    std::printf("run artifacts in %s\n", out.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt_path, std::int64_t episodes, std::int64_t seed) {
    CheckpointContainer c = CheckpointContainer::load(ckpt_path);
    TrainConfig cfg = parse_config_text(c.blob("config"));
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (episodes >= 1) cfg.eval_episodes = episodes;
    echo_config(cfg);
    Trainer trainer(cfg);
    trainer.load_checkpoint(ckpt_path, /*strict_config=*/false);
    MetricsRow row = trainer.evaluate();
    std::printf("eval_return_mean=%.9g eval_return_std=%.9g episodes=%lld\n", row.eval_return_mean,
                row.eval_return_std, static_cast<long long>(cfg.eval_episodes));
    return 0;
}

int cmd_sweep(const CommonFlags& flags, const std::string& axis, const std::vector<std::string>& values) {
    if (values.empty()) throw ConfigError("sweep: --values must not be empty");
    TrainConfig base = resolve_config(flags);
    const std::string out = flags.out_dir.empty() ? ("runs/sweep_" + axis) : flags.out_dir;
    std::filesystem::create_directories(out);
    std::ofstream summary(out + "/summary.csv");
    summary << "axis_value,final_eval_return\n";
    for (const auto& value : values) {
        TrainConfig cfg = base;
        if (axis == "utd") cfg.utd = std::stoll(value);
        else if (axis == "width") cfg.critic_dh = std::stoll(value);
        else if (axis == "depth") cfg.critic_blocks = std::stoll(value);
        else if (axis == "ablation") cfg = ablate(base, value);
        else throw ConfigError("sweep: unknown axis '" + axis + "'");
        cfg.validate();
        std::cout << "== sweep point " << axis << "=" << value << "\n";
        echo_config(cfg);
        Trainer trainer(cfg);
        RunResult res = trainer.run(out + "/" + axis + "_" + value);
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s,%.9g", value.c_str(), res.final_eval_return);
        summary << buf << "\n";
        summary.flush();
        std::printf("%s=%s -> final return %.9g\n", axis.c_str(), value.c_str(), res.final_eval_return);
    }
    std::printf("sweep summary in %s/summary.csv\n", out.c_str());
    return 0;
}

int cmd_analyze(const std::string& run_dir) {
    const std::string path = run_dir + "/telemetry.csv";
    if (!std::filesystem::exists(path)) throw ConfigError("analyze: missing " + path);
    std::cout << "resolved configuration:\n  run_dir=" << run_dir << "\n";
    std::vector<TelemetryRecord> records = parse_telemetry_csv(path);
    TelemetrySummary s = summarize_telemetry(records);
    std::ofstream out(run_dir + "/telemetry_summary.txt");
    if (records.empty()) {
        std::cout << "telemetry series is empty (no updates recorded)\n";
        out << "rows=0\n";
        return 0;
    }
    std::printf("%-24s %14s %14s %14s\n", "column", "min", "max", "mean");
    for (std::size_t i = 0; i < s.columns.size(); ++i) {
        std::printf("%-24s %14.9g %14.9g %14.9g\n", s.columns[i].c_str(), s.col_min[i], s.col_max[i],
                    s.col_mean[i]);
        out << s.columns[i] << ",min=" << s.col_min[i] << ",max=" << s.col_max[i] << ",mean=" << s.col_mean[i]
            << "\n";
    }
    std::printf("enc_elr_drift_ratio (second half max/min): %.9g\n", s.enc_elr_drift_ratio);
    out << "rows=" << s.rows << "\n";
    out << "enc_elr_drift_ratio=" << s.enc_elr_drift_ratio << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hyperspherical soft actor-critic training stack"};
    app.require_subcommand(1);

    CommonFlags train_flags;
    std::string resume_path;
    CLI::App* train = app.add_subcommand("train", "run a training job");
    add_common_flags(train, train_flags);
    train->add_option("--resume", resume_path, "checkpoint to resume from");

    std::string eval_ckpt;
    std::int64_t eval_episodes = -1, eval_seed = -1;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint with the deterministic policy");
    eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval->add_option("--episodes", eval_episodes, "number of evaluation episodes");
    eval->add_option("--seed", eval_seed, "evaluation seed");

    CommonFlags sweep_flags;
    std::string sweep_axis;
    std::vector<std::string> sweep_values;
    CLI::App* sweep = app.add_subcommand("sweep", "sequential runs along one axis");
    add_common_flags(sweep, sweep_flags);
    sweep->add_option("--axis", sweep_axis, "one of: utd, width, depth, ablation")->required();
    sweep->add_option("--values", sweep_values, "axis values")->delimiter(',');

    std::string analyze_dir;
    CLI::App* analyze = app.add_subcommand("analyze", "summarize a run's telemetry");
    analyze->add_option("--run", analyze_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (*train) return cmd_train(train_flags, resume_path);
        if (*eval) return cmd_eval(eval_ckpt, eval_episodes, eval_seed);
        if (*sweep) return cmd_sweep(sweep_flags, sweep_axis, sweep_values);
        if (*analyze) return cmd_analyze(analyze_dir);
    } catch (const NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

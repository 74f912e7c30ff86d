#ifndef HYPERSAC_TRAINER_HPP_
#define HYPERSAC_TRAINER_HPP_

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hypersac/checkpoint.hpp"
#include "hypersac/common.hpp"
#include "hypersac/config.hpp"
#include "hypersac/envs.hpp"
#include "hypersac/normalizers.hpp"
#include "hypersac/optim.hpp"
#include "hypersac/replay.hpp"
#include "hypersac/sac.hpp"
#include "hypersac/telemetry.hpp"

namespace hypersac {

struct MetricsRow {
    std::uint64_t env_step = 0;
    double eval_return_mean = 0.0;
    double eval_return_std = 0.0;
    double alpha = 0.0;
    double lr = 0.0;
};

inline const char* metrics_csv_header() { return "env_step,eval_return_mean,eval_return_std,alpha,lr"; }

inline std::string metrics_csv_row(const MetricsRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%llu,%.9g,%.9g,%.9g,%.9g", static_cast<unsigned long long>(r.env_step),
                  r.eval_return_mean, r.eval_return_std, r.alpha, r.lr);
    return buf;
}

struct RunResult {
    std::vector<MetricsRow> metrics;
    std::vector<TelemetryRecord> telemetry;
    double final_eval_return = 0.0;
    double best_eval_return = -std::numeric_limits<double>::infinity();
    std::uint64_t env_steps = 0;
    std::uint64_t updates = 0;
};

// Optional per-update observer for tests and diagnostics. Telemetry capture
// and CSV writing are always on; the hook sees every update.
struct TrainHooks {
    std::function<void(const UpdateDiag&, SacAgent&)> on_update;
};

// Owns the full training state: agent, env, replay, normalizers, RNG streams,
// and counters. Single-threaded, deterministic for a fixed config and seed.
class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        env_ = make_env(cfg_.env);
        eval_env_ = make_env(cfg_.env);
        const auto& d = env_->descriptor();

        EncoderConfig actor_cfg = encoder_config(d.obs_dim);
        EncoderConfig critic_cfg = encoder_config(d.obs_dim + d.action_dim);
        actor_cfg.d_h = cfg_.actor_dh;
        actor_cfg.n_blocks = cfg_.actor_blocks;
        critic_cfg.d_h = cfg_.critic_dh;
        critic_cfg.n_blocks = cfg_.critic_blocks;

        SacConfig sac;
        sac.gamma = cfg_.gamma;
        sac.tau = cfg_.tau;
        sac.init_alpha = cfg_.init_alpha;
        sac.target_entropy = std::isnan(cfg_.target_entropy)
                                 ? -static_cast<double>(d.action_dim) / 2.0
                                 : cfg_.target_entropy;
        sac.beta1 = cfg_.beta1;
        sac.beta2 = cfg_.beta2;
        sac.clipped_double_q = cfg_.clipped_double_q < 0 ? d.has_failure_termination
                                                         : (cfg_.clipped_double_q != 0);
        sac.mse_critic = cfg_.mse_critic;
        sac.hard_target = cfg_.hard_target;
        sac.hard_target_interval = cfg_.hard_target_interval;

        Rng init_rng(derive_seed(cfg_.seed, 1));
        agent_ = std::make_unique<SacAgent>(actor_cfg, critic_cfg, d.action_dim,
                                            make_atoms(cfg_.g_min, cfg_.g_max, cfg_.n_atom), sac, init_rng);
        rsnorm_ = RunningStat(static_cast<std::size_t>(d.obs_dim));
        scaler_ = RewardScaler(cfg_.gamma, cfg_.g_max, cfg_.reward_scaler_eps, !cfg_.no_reward_bounding);
        replay_ = ReplayBuffer(cfg_.replay_capacity, d.obs_dim, d.action_dim);
        action_rng_ = Rng(derive_seed(cfg_.seed, 2));
        update_rng_ = Rng(derive_seed(cfg_.seed, 3));
        buffer_rng_ = Rng(derive_seed(cfg_.seed, 4));

        obs_ = env_->reset(episode_seed());
        rsnorm_.update(obs_);
        episode_start_ = true;
    }

    // Runs until total_steps. When run_dir is non-empty, writes
    // config.resolved, metrics.csv, telemetry.csv and checkpoints there.
    RunResult run(const std::string& run_dir = "", const TrainHooks* hooks = nullptr) {
        namespace fs = std::filesystem;
        std::ofstream metrics_out, telemetry_out;
        if (!run_dir.empty()) {
            fs::create_directories(run_dir);
            fs::create_directories(run_dir + "/checkpoints");
            std::ofstream cfg_out(run_dir + "/config.resolved");
            cfg_out << serialize_config(cfg_);
            // Resuming appends to existing streams; a fresh directory still
            // needs headers even when env_step is past zero.
            const bool append = env_step_ > 0 && fs::exists(run_dir + "/metrics.csv");
            metrics_out.open(run_dir + "/metrics.csv", append ? std::ios::app : std::ios::out);
            telemetry_out.open(run_dir + "/telemetry.csv", append ? std::ios::app : std::ios::out);
            if (!append) {
                metrics_out << metrics_csv_header() << "\n";
                telemetry_out << telemetry_csv_header() << "\n";
            }
        }

        RunResult result;
        const auto& d = env_->descriptor();
        UpdateHooks update_hooks;
        TelemetryRecord pending_telemetry;
        bool capture_telemetry = false;
        bool have_telemetry = false;
        update_hooks.after_critic_backward = [&](const std::vector<Tensor>& feats) {
            if (!capture_telemetry) return;
            pending_telemetry =
                record_telemetry(agent_->update_count(), agent_->critic_params(), "critic1", feats);
            have_telemetry = true;
        };

        try {
            while (env_step_ < cfg_.total_steps) {
                ++env_step_;
                std::vector<double> action(static_cast<std::size_t>(d.action_dim));
                if (env_step_ <= cfg_.learning_starts) {
                    for (auto& a : action) a = action_rng_.uniform(-1.0, 1.0);
                } else {
                    action = agent_->act_stochastic(rsnorm_.apply(obs_, cfg_.rsnorm_eps), action_rng_);
                }

                StepResult sr = env_->step(action);
                rsnorm_.update(sr.obs);
                double scaled = sr.reward;
                if (!cfg_.no_reward_scaling) scaled = scaler_.step(sr.reward, episode_start_);
                episode_start_ = false;

                Transition t;
                t.obs = obs_;
                t.action = action;
                t.scaled_reward = scaled;
                t.next_obs = sr.obs;
                t.terminated = sr.terminated;
                t.truncated = sr.truncated;
                replay_.push(t);

                if (sr.terminated || sr.truncated) {
                    ++episode_count_;
                    obs_ = env_->reset(episode_seed());
                    rsnorm_.update(obs_);
                    episode_start_ = true;
                } else {
                    obs_ = sr.obs;
                }

                if (env_step_ > cfg_.learning_starts) {
                    const double lr =
                        lr_schedule(env_step_, cfg_.total_steps, cfg_.lr_init, effective_lr_final());
                    for (std::int64_t u = 0; u < cfg_.utd; ++u) {
                        capture_telemetry =
                            (agent_->update_count() + 1) % cfg_.telemetry_interval == 0;
                        UpdateDiag diag;
                        NormalizedBatch batch = sample_batch();
                        agent_->update(batch, lr, update_rng_, hooks && hooks->on_update ? &diag : nullptr,
                                       &update_hooks);
                        if (have_telemetry) {
                            result.telemetry.push_back(pending_telemetry);
                            if (telemetry_out.is_open())
                                telemetry_out << telemetry_csv_row(pending_telemetry) << "\n";
                            have_telemetry = false;
                        }
                        if (hooks && hooks->on_update) hooks->on_update(diag, *agent_);
                    }
                }

                if (env_step_ % cfg_.eval_interval == 0) {
                    MetricsRow row = evaluate();
                    result.metrics.push_back(row);
                    if (metrics_out.is_open()) {
                        metrics_out << metrics_csv_row(row) << "\n";
                        metrics_out.flush();
                    }
                    result.final_eval_return = row.eval_return_mean;
                    result.best_eval_return = std::max(result.best_eval_return, row.eval_return_mean);
                }

                if (!run_dir.empty() && cfg_.checkpoint_interval > 0 &&
                    env_step_ % cfg_.checkpoint_interval == 0) {
                    save_checkpoint(run_dir + "/checkpoints/step_" + std::to_string(env_step_) + ".ckpt");
                }
            }
        } catch (const NumericError& e) {
            if (!run_dir.empty()) {
                std::ofstream dump(run_dir + "/diagnostic.txt");
                dump << "aborted at env_step " << env_step_ << ": " << e.what() << "\n";
                dump << "updates completed: " << agent_->update_count() << "\n";
            }
            throw;
        }

        result.env_steps = env_step_;
        result.updates = agent_->update_count();
        return result;
    }

    // Mean/std of raw (unscaled) returns over eval_episodes deterministic
    // rollouts on a separate env instance.
    MetricsRow evaluate() {
        MetricsRow row;
        row.env_step = env_step_;
        row.alpha = agent_->alpha();
        row.lr = lr_schedule(env_step_, cfg_.total_steps, cfg_.lr_init, effective_lr_final());
        std::vector<double> returns;
        for (std::int64_t ep = 0; ep < cfg_.eval_episodes; ++ep) {
            std::vector<double> o =
                eval_env_->reset(derive_seed(cfg_.seed, 0x9000 + env_step_ * 131 + static_cast<std::uint64_t>(ep)));
            double ret = 0.0;
            for (;;) {
                std::vector<double> a = agent_->act_deterministic(rsnorm_.apply(o, cfg_.rsnorm_eps));
                StepResult sr = eval_env_->step(a);
                ret += sr.reward;
                if (sr.terminated || sr.truncated) break;
                o = sr.obs;
            }
            returns.push_back(ret);
        }
        double mean = 0.0;
        for (double r : returns) mean += r;
        mean /= static_cast<double>(returns.size());
        double var = 0.0;
        for (double r : returns) var += (r - mean) * (r - mean);
        var /= static_cast<double>(returns.size());
        row.eval_return_mean = mean;
        row.eval_return_std = std::sqrt(var);
        return row;
    }

    void save_checkpoint(const std::string& path) {
        CheckpointContainer c;
        c.put_blob("config", serialize_config(cfg_));
        c.put_blob("rng/action", action_rng_.serialize());
        c.put_blob("rng/update", update_rng_.serialize());
        c.put_blob("rng/buffer", buffer_rng_.serialize());
        c.put_scalar("meta/config_digest", static_cast<double>(config_digest(cfg_) % (1ull << 52)));
        c.put_scalar("meta/env_step", static_cast<double>(env_step_));
        c.put_scalar("meta/episode_count", static_cast<double>(episode_count_));
        c.put_scalar("meta/episode_start", episode_start_ ? 1.0 : 0.0);
        c.put_scalar("meta/update_count", static_cast<double>(agent_->update_count()));
        c.put_array("meta/current_obs", {static_cast<std::int64_t>(obs_.size())}, obs_);
        c.put_array("env/state", {static_cast<std::int64_t>(env_->get_state().size())}, env_->get_state());

        for (const auto& p : agent_->actor_params()) c.put_array(p.name, p.tensor.shape(), p.tensor.value());
        for (const auto& p : agent_->critic_params()) c.put_array(p.name, p.tensor.shape(), p.tensor.value());
        for (const auto& p : agent_->target_params()) c.put_array(p.name, p.tensor.shape(), p.tensor.value());
        c.put_array("log_alpha", {1}, agent_->log_alpha().value());
        save_adam(c, "adam/actor", agent_->actor_opt());
        save_adam(c, "adam/critic", agent_->critic_opt());
        save_adam(c, "adam/alpha", agent_->alpha_opt());

        c.put_array("rsnorm/mean", {static_cast<std::int64_t>(rsnorm_.dim())}, rsnorm_.mean());
        c.put_array("rsnorm/var", {static_cast<std::int64_t>(rsnorm_.dim())}, rsnorm_.var());
        c.put_scalar("rsnorm/count", static_cast<double>(rsnorm_.count()));
        c.put_scalar("rscaler/g", scaler_.discounted_return());
        c.put_scalar("rscaler/running_max", scaler_.running_max());
        c.put_array("rscaler/mean", {1}, scaler_.stat().mean());
        c.put_array("rscaler/var", {1}, scaler_.stat().var());
        c.put_scalar("rscaler/count", static_cast<double>(scaler_.stat().count()));

        auto& rb = replay_;
        const std::int64_t n = replay_.size();
        const std::int64_t od = replay_.obs_dim(), ad = replay_.act_dim();
        c.put_scalar("replay/size", static_cast<double>(n));
        c.put_scalar("replay/head", static_cast<double>(replay_.head()));
        c.put_array("replay/obs", {n, od}, std::vector<double>(rb.raw_obs().begin(), rb.raw_obs().begin() + n * od));
        c.put_array("replay/action", {n, ad},
                    std::vector<double>(rb.raw_action().begin(), rb.raw_action().begin() + n * ad));
        c.put_array("replay/reward", {n}, std::vector<double>(rb.raw_reward().begin(), rb.raw_reward().begin() + n));
        c.put_array("replay/next_obs", {n, od},
                    std::vector<double>(rb.raw_next_obs().begin(), rb.raw_next_obs().begin() + n * od));
        c.put_array("replay/terminated", {n},
                    std::vector<double>(rb.raw_terminated().begin(), rb.raw_terminated().begin() + n));
        c.put_array("replay/truncated", {n},
                    std::vector<double>(rb.raw_truncated().begin(), rb.raw_truncated().begin() + n));
        c.save(path);
    }

    // strict_config: resume demands an identical training configuration;
    // evaluation-only loads may relax it (network shapes still must match).
    void load_checkpoint(const std::string& path, bool strict_config = true) {
        CheckpointContainer c = CheckpointContainer::load(path);
        if (strict_config &&
            config_identity_text(parse_config_text(c.blob("config"))) != config_identity_text(cfg_))
            throw ConfigError("checkpoint: config mismatch; resume requires the same resolved config");
        action_rng_.deserialize(c.blob("rng/action"));
        update_rng_.deserialize(c.blob("rng/update"));
        buffer_rng_.deserialize(c.blob("rng/buffer"));
        env_step_ = static_cast<std::uint64_t>(c.scalar("meta/env_step"));
        episode_count_ = static_cast<std::uint64_t>(c.scalar("meta/episode_count"));
        episode_start_ = c.scalar("meta/episode_start") != 0.0;
        agent_->restore_update_count(static_cast<std::uint64_t>(c.scalar("meta/update_count")));
        obs_ = c.array("meta/current_obs");
        env_->set_state(c.array("env/state"));

        for (auto& p : agent_->actor_params()) p.tensor.mutable_value() = c.array(p.name);
        for (auto& p : agent_->critic_params()) p.tensor.mutable_value() = c.array(p.name);
        for (auto& p : agent_->target_params()) p.tensor.mutable_value() = c.array(p.name);
        agent_->log_alpha().mutable_value() = c.array("log_alpha");
        load_adam(c, "adam/actor", agent_->actor_opt());
        load_adam(c, "adam/critic", agent_->critic_opt());
        load_adam(c, "adam/alpha", agent_->alpha_opt());

        rsnorm_.restore(c.array("rsnorm/mean"), c.array("rsnorm/var"),
                        static_cast<std::uint64_t>(c.scalar("rsnorm/count")));
        scaler_.restore(c.scalar("rscaler/g"), c.scalar("rscaler/running_max"), c.array("rscaler/mean"),
                        c.array("rscaler/var"), static_cast<std::uint64_t>(c.scalar("rscaler/count")));

        const auto n = static_cast<std::int64_t>(c.scalar("replay/size"));
        const std::int64_t od = replay_.obs_dim(), ad = replay_.act_dim();
        std::copy_n(c.array("replay/obs").begin(), n * od, replay_.raw_obs().begin());
        std::copy_n(c.array("replay/action").begin(), n * ad, replay_.raw_action().begin());
        std::copy_n(c.array("replay/reward").begin(), n, replay_.raw_reward().begin());
        std::copy_n(c.array("replay/next_obs").begin(), n * od, replay_.raw_next_obs().begin());
        std::copy_n(c.array("replay/terminated").begin(), n, replay_.raw_terminated().begin());
        std::copy_n(c.array("replay/truncated").begin(), n, replay_.raw_truncated().begin());
        replay_.restore_counters(static_cast<std::int64_t>(c.scalar("replay/head")), n);
    }

    SacAgent& agent() { return *agent_; }
    const TrainConfig& config() const { return cfg_; }
    const RunningStat& rsnorm() const { return rsnorm_; }
    const RewardScaler& reward_scaler() const { return scaler_; }
    ReplayBuffer& replay() { return replay_; }
    std::uint64_t env_step() const { return env_step_; }
    Env& env() { return *env_; }

private:
    EncoderConfig encoder_config(std::int64_t in_dim) const {
        EncoderConfig e;
        e.in_dim = in_dim;
        e.c_shift = cfg_.c_shift;
        e.no_l2 = cfg_.no_input_l2;
        e.no_shift = cfg_.no_shift;
        e.use_layernorm = cfg_.use_layernorm;
        e.s_init_override = cfg_.s_init_one ? 1.0 : 0.0;
        e.s_scale_override = cfg_.s_scale_one ? 1.0 : 0.0;
        e.alpha_init_override = cfg_.alpha_init_half ? 0.5 : 0.0;
        e.alpha_scale_override = cfg_.alpha_scale_one ? 1.0 : 0.0;
        return e;
    }

    double effective_lr_final() const { return cfg_.no_lr_decay ? cfg_.lr_init : cfg_.lr_final; }

    std::uint64_t episode_seed() const { return derive_seed(cfg_.seed, 0xE000 + episode_count_); }

    NormalizedBatch sample_batch() {
        NormalizedBatch b;
        b.size = cfg_.batch_size;
        b.obs_dim = replay_.obs_dim();
        b.act_dim = replay_.act_dim();
        const auto idx = replay_.sample_indices(cfg_.batch_size, buffer_rng_);
        std::vector<double> raw_obs, raw_next;
        replay_.gather(idx, raw_obs, b.action, b.reward, raw_next, b.terminated);
        b.obs.resize(raw_obs.size());
        b.next_obs.resize(raw_next.size());
        const std::int64_t od = b.obs_dim;
        std::vector<double> tmp(static_cast<std::size_t>(od));
        for (std::int64_t i = 0; i < b.size; ++i) {
            std::copy_n(raw_obs.begin() + i * od, od, tmp.begin());
            auto norm = rsnorm_.apply(tmp, cfg_.rsnorm_eps);
            std::copy(norm.begin(), norm.end(), b.obs.begin() + i * od);
            std::copy_n(raw_next.begin() + i * od, od, tmp.begin());
            norm = rsnorm_.apply(tmp, cfg_.rsnorm_eps);
            std::copy(norm.begin(), norm.end(), b.next_obs.begin() + i * od);
        }
        return b;
    }

    static void save_adam(CheckpointContainer& c, const std::string& prefix, const Adam& opt) {
        c.put_scalar(prefix + "/t", static_cast<double>(opt.steps()));
        for (const auto& [name, st] : opt.states()) {
            c.put_array(prefix + "/m/" + name, {static_cast<std::int64_t>(st.m.size())}, st.m);
            c.put_array(prefix + "/v/" + name, {static_cast<std::int64_t>(st.v.size())}, st.v);
        }
    }

    static void load_adam(const CheckpointContainer& c, const std::string& prefix, Adam& opt) {
        opt.restore_steps(static_cast<std::uint64_t>(c.scalar(prefix + "/t")));
        opt.states().clear();
        const std::string mprefix = prefix + "/m/";
        for (const auto& [name, sv] : c.arrays()) {
            if (name.rfind(mprefix, 0) != 0) continue;
            const std::string param = name.substr(mprefix.size());
            Adam::State st;
            st.m = sv.second;
            st.v = c.array(prefix + "/v/" + param);
            opt.states()[param] = std::move(st);
        }
    }

    TrainConfig cfg_;
    std::unique_ptr<Env> env_, eval_env_;
    std::unique_ptr<SacAgent> agent_;
    RunningStat rsnorm_;
    RewardScaler scaler_;
    ReplayBuffer replay_;
    Rng action_rng_, update_rng_, buffer_rng_;
    std::vector<double> obs_;
    bool episode_start_ = true;
    std::uint64_t env_step_ = 0;
    std::uint64_t episode_count_ = 0;
};

}  // namespace hypersac

#endif  // HYPERSAC_TRAINER_HPP_

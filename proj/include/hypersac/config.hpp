#ifndef HYPERSAC_CONFIG_HPP_
#define HYPERSAC_CONFIG_HPP_

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hypersac/common.hpp"

namespace hypersac {

// Full training configuration. Every field mirrors a key in the flat
// key=value config file; CLI flags override file values.
struct TrainConfig {
    std::string env = "pendulum";
    std::uint64_t seed = 0;
    std::uint64_t total_steps = 30000;
    std::uint64_t learning_starts = 5000;
    std::int64_t batch_size = 256;
    std::int64_t utd = 2;
    double lr_init = 1e-4;
    double lr_final = 3e-5;
    double gamma = 0.99;
    double tau = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double init_alpha = 1e-2;
    // Signed entropy target; NAN means "use -action_dim / 2".
    double target_entropy = std::nan("");
    std::int64_t n_atom = 101;
    double g_min = -5.0;
    double g_max = 5.0;
    double c_shift = 3.0;
    double reward_scaler_eps = 1e-8;
    double rsnorm_eps = 1e-8;
    std::int64_t actor_dh = 128;
    std::int64_t actor_blocks = 1;
    std::int64_t critic_dh = 512;
    std::int64_t critic_blocks = 2;
    std::int64_t replay_capacity = 1000000;
    std::uint64_t eval_interval = 2000;
    std::int64_t eval_episodes = 10;
    std::uint64_t telemetry_interval = 100;
    std::uint64_t checkpoint_interval = 0;  // 0 disables periodic checkpoints
    // -1 means "use the env descriptor's failure-termination flag".
    int clipped_double_q = -1;
    std::uint64_t hard_target_interval = 200;

    // Ablation toggles (design-study variants; all off by default).
    bool no_input_l2 = false;
    bool no_shift = false;
    bool use_layernorm = false;
    bool mse_critic = false;
    bool no_reward_scaling = false;
    bool no_reward_bounding = false;
    bool hard_target = false;
    bool no_lr_decay = false;
    bool s_init_one = false;
    bool s_scale_one = false;
    bool alpha_init_half = false;
    bool alpha_scale_one = false;

    void validate() const {
        if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
        if (utd < 0) throw ConfigError("config: utd must be >= 0");
        if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("config: gamma must be in [0, 1)");
        if (tau <= 0.0 || tau > 1.0) throw ConfigError("config: tau must be in (0, 1]");
        if (n_atom < 2) throw ConfigError("config: n_atom must be >= 2");
        if (g_max <= g_min) throw ConfigError("config: support must satisfy g_max > g_min");
        if (!no_shift && c_shift <= 0.0) throw ConfigError("config: c_shift must be > 0");
        if (actor_dh < 1 || critic_dh < 1) throw ConfigError("config: hidden dims must be >= 1");
        if (actor_blocks < 1 || critic_blocks < 1) throw ConfigError("config: block counts must be >= 1");
        if (replay_capacity < 1) throw ConfigError("config: replay_capacity must be >= 1");
        if (lr_init <= 0.0 || lr_final <= 0.0) throw ConfigError("config: learning rates must be > 0");
        if (eval_interval == 0) throw ConfigError("config: eval_interval must be > 0");
        if (eval_episodes < 1) throw ConfigError("config: eval_episodes must be >= 1");
        if (telemetry_interval == 0) throw ConfigError("config: telemetry_interval must be > 0");
    }
};

namespace detail {

template <typename T>
std::string to_cfg_string(T v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline std::string to_cfg_string(bool v) { return v ? "1" : "0"; }

}  // namespace detail

// Deterministic key order; used for the resolved-config echo and the digest.
inline std::vector<std::pair<std::string, std::string>> config_items(const TrainConfig& c) {
    using detail::to_cfg_string;
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("env", c.env);
    kv.emplace_back("seed", to_cfg_string(c.seed));
    kv.emplace_back("total_steps", to_cfg_string(c.total_steps));
    kv.emplace_back("learning_starts", to_cfg_string(c.learning_starts));
    kv.emplace_back("batch_size", to_cfg_string(c.batch_size));
    kv.emplace_back("utd", to_cfg_string(c.utd));
    kv.emplace_back("lr_init", to_cfg_string(c.lr_init));
    kv.emplace_back("lr_final", to_cfg_string(c.lr_final));
    kv.emplace_back("gamma", to_cfg_string(c.gamma));
    kv.emplace_back("tau", to_cfg_string(c.tau));
    kv.emplace_back("beta1", to_cfg_string(c.beta1));
    kv.emplace_back("beta2", to_cfg_string(c.beta2));
    kv.emplace_back("init_alpha", to_cfg_string(c.init_alpha));
    kv.emplace_back("target_entropy", std::isnan(c.target_entropy) ? "auto" : to_cfg_string(c.target_entropy));
    kv.emplace_back("n_atom", to_cfg_string(c.n_atom));
    kv.emplace_back("g_min", to_cfg_string(c.g_min));
    kv.emplace_back("g_max", to_cfg_string(c.g_max));
    kv.emplace_back("c_shift", to_cfg_string(c.c_shift));
    kv.emplace_back("reward_scaler_eps", to_cfg_string(c.reward_scaler_eps));
    kv.emplace_back("rsnorm_eps", to_cfg_string(c.rsnorm_eps));
    kv.emplace_back("actor_dh", to_cfg_string(c.actor_dh));
    kv.emplace_back("actor_blocks", to_cfg_string(c.actor_blocks));
    kv.emplace_back("critic_dh", to_cfg_string(c.critic_dh));
    kv.emplace_back("critic_blocks", to_cfg_string(c.critic_blocks));
    kv.emplace_back("replay_capacity", to_cfg_string(c.replay_capacity));
    kv.emplace_back("eval_interval", to_cfg_string(c.eval_interval));
    kv.emplace_back("eval_episodes", to_cfg_string(c.eval_episodes));
    kv.emplace_back("telemetry_interval", to_cfg_string(c.telemetry_interval));
    kv.emplace_back("checkpoint_interval", to_cfg_string(c.checkpoint_interval));
    kv.emplace_back("clipped_double_q", to_cfg_string(c.clipped_double_q));
    kv.emplace_back("hard_target_interval", to_cfg_string(c.hard_target_interval));
    kv.emplace_back("no_input_l2", to_cfg_string(c.no_input_l2));
    kv.emplace_back("no_shift", to_cfg_string(c.no_shift));
    kv.emplace_back("use_layernorm", to_cfg_string(c.use_layernorm));
    kv.emplace_back("mse_critic", to_cfg_string(c.mse_critic));
    kv.emplace_back("no_reward_scaling", to_cfg_string(c.no_reward_scaling));
    kv.emplace_back("no_reward_bounding", to_cfg_string(c.no_reward_bounding));
    kv.emplace_back("hard_target", to_cfg_string(c.hard_target));
    kv.emplace_back("no_lr_decay", to_cfg_string(c.no_lr_decay));
    kv.emplace_back("s_init_one", to_cfg_string(c.s_init_one));
    kv.emplace_back("s_scale_one", to_cfg_string(c.s_scale_one));
    kv.emplace_back("alpha_init_half", to_cfg_string(c.alpha_init_half));
    kv.emplace_back("alpha_scale_one", to_cfg_string(c.alpha_scale_one));
    return kv;
}

inline std::string serialize_config(const TrainConfig& c) {
    std::ostringstream os;
    for (const auto& [k, v] : config_items(c)) os << k << "=" << v << "\n";
    return os.str();
}

inline void apply_config_kv(TrainConfig& c, const std::string& key, const std::string& value) {
    auto as_u64 = [&]() -> std::uint64_t { return std::stoull(value); };
    auto as_i64 = [&]() -> std::int64_t { return std::stoll(value); };
    auto as_f = [&]() -> double { return std::stod(value); };
    auto as_b = [&]() -> bool { return value == "1" || value == "true"; };

    if (key == "env") c.env = value;
    else if (key == "seed") c.seed = as_u64();
    else if (key == "total_steps") c.total_steps = as_u64();
    else if (key == "learning_starts") c.learning_starts = as_u64();
    else if (key == "batch_size") c.batch_size = as_i64();
    else if (key == "utd") c.utd = as_i64();
    else if (key == "lr_init") c.lr_init = as_f();
    else if (key == "lr_final") c.lr_final = as_f();
    else if (key == "gamma") c.gamma = as_f();
    else if (key == "tau") c.tau = as_f();
    else if (key == "beta1") c.beta1 = as_f();
    else if (key == "beta2") c.beta2 = as_f();
    else if (key == "init_alpha") c.init_alpha = as_f();
    else if (key == "target_entropy") c.target_entropy = (value == "auto") ? std::nan("") : as_f();
    else if (key == "n_atom") c.n_atom = as_i64();
    else if (key == "g_min") c.g_min = as_f();
    else if (key == "g_max") c.g_max = as_f();
    else if (key == "c_shift") c.c_shift = as_f();
    else if (key == "reward_scaler_eps") c.reward_scaler_eps = as_f();
    else if (key == "rsnorm_eps") c.rsnorm_eps = as_f();
    else if (key == "actor_dh") c.actor_dh = as_i64();
    else if (key == "actor_blocks") c.actor_blocks = as_i64();
    else if (key == "critic_dh") c.critic_dh = as_i64();
    else if (key == "critic_blocks") c.critic_blocks = as_i64();
    else if (key == "replay_capacity") c.replay_capacity = as_i64();
    else if (key == "eval_interval") c.eval_interval = as_u64();
    else if (key == "eval_episodes") c.eval_episodes = as_i64();
    else if (key == "telemetry_interval") c.telemetry_interval = as_u64();
    else if (key == "checkpoint_interval") c.checkpoint_interval = as_u64();
    else if (key == "clipped_double_q") c.clipped_double_q = static_cast<int>(as_i64());
    else if (key == "hard_target_interval") c.hard_target_interval = as_u64();
    else if (key == "no_input_l2") c.no_input_l2 = as_b();
    else if (key == "no_shift") c.no_shift = as_b();
    else if (key == "use_layernorm") c.use_layernorm = as_b();
    else if (key == "mse_critic") c.mse_critic = as_b();
    else if (key == "no_reward_scaling") c.no_reward_scaling = as_b();
    else if (key == "no_reward_bounding") c.no_reward_bounding = as_b();
    else if (key == "hard_target") c.hard_target = as_b();
    else if (key == "no_lr_decay") c.no_lr_decay = as_b();
    else if (key == "s_init_one") c.s_init_one = as_b();
    else if (key == "s_scale_one") c.s_scale_one = as_b();
    else if (key == "alpha_init_half") c.alpha_init_half = as_b();
    else if (key == "alpha_scale_one") c.alpha_scale_one = as_b();
    else throw ConfigError("config: unknown key '" + key + "'");
}

inline TrainConfig parse_config_text(const std::string& text, TrainConfig base = TrainConfig{}) {
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto notspace = [](unsigned char ch) { return !std::isspace(ch); };
        line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
        line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " is not key=value: '" + line + "'");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
        value.erase(value.begin(), std::find_if(value.begin(), value.end(), notspace));
        try {
            apply_config_kv(base, key, value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError("config: bad value for '" + key + "': " + e.what());
        }
    }
    return base;
}

inline TrainConfig load_config_file(const std::string& path, TrainConfig base = TrainConfig{}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config_text(os.str(), base);
}

// Applies one named design-study variant; exactly one dimension changes.
inline TrainConfig ablate(const TrainConfig& base, const std::string& flag) {
    TrainConfig c = base;
    if (flag == "no_input_l2") c.no_input_l2 = true;
    else if (flag == "no_shift") c.no_shift = true;
    else if (flag == "c_shift_1") c.c_shift = 1.0;
    else if (flag == "mse_critic") c.mse_critic = true;
    else if (flag == "no_reward_scaling") c.no_reward_scaling = true;
    else if (flag == "no_reward_bounding") c.no_reward_bounding = true;
    else if (flag == "hard_target") c.hard_target = true;
    else if (flag == "no_lr_decay") c.lr_final = c.lr_init;
    else if (flag == "use_layernorm") c.use_layernorm = true;
    else if (flag == "s_init_1") c.s_init_one = true;
    else if (flag == "s_scale_1") c.s_scale_one = true;
    else if (flag == "alpha_init_0.5") c.alpha_init_half = true;
    else if (flag == "alpha_scale_1") c.alpha_scale_one = true;
    else throw UsageError("ablate: unknown flag '" + flag + "'");
    return c;
}

inline std::vector<std::string> ablation_flags() {
    return {"no_input_l2",    "no_shift",     "c_shift_1",   "mse_critic", "no_reward_scaling",
            "no_reward_bounding", "hard_target",  "no_lr_decay", "use_layernorm", "s_init_1",
            "s_scale_1",      "alpha_init_0.5", "alpha_scale_1"};
}

// Resolved-config text restricted to the keys that determine the training
// trajectory. Output cadences (checkpoint writing) may differ across a
// resume without changing any computed number.
inline std::string config_identity_text(const TrainConfig& c) {
    std::ostringstream os;
    for (const auto& [k, v] : config_items(c)) {
        if (k == "checkpoint_interval") continue;
        os << k << "=" << v << "\n";
    }
    return os.str();
}

// FNV-1a digest of the resolved config text, stored in checkpoints.
inline std::uint64_t config_digest(const TrainConfig& c) {
    const std::string text = serialize_config(c);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace hypersac

#endif  // HYPERSAC_CONFIG_HPP_

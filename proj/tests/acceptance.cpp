// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line. The long training-based criteria run two seeds at a time on worker
// threads; every run is deterministic in isolation.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

#include "hypersac/trainer.hpp"
#include "testutil.hpp"

using namespace hypersac;
using testutil::max_grad_rel_error;
using testutil::random_vector;

namespace {

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void report(int criterion, bool pass, const std::string& detail, double secs) {
    std::printf("[criterion %d] %s: %s (%.1f s)\n", criterion, pass ? "PASS" : "FAIL", detail.c_str(), secs);
    std::fflush(stdout);
}

TrainConfig desk_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.env = "pendulum";
    cfg.seed = seed;
    cfg.total_steps = 30000;
    cfg.learning_starts = 5000;
    cfg.batch_size = 256;
    cfg.utd = 2;
    cfg.actor_dh = 32;
    cfg.actor_blocks = 1;
    cfg.critic_dh = 48;
    cfg.critic_blocks = 1;
    cfg.n_atom = 51;
    cfg.replay_capacity = 30000;
    cfg.eval_interval = 1000;
    cfg.eval_episodes = 10;
    cfg.telemetry_interval = 100;
    return cfg;
}

EncoderConfig tiny_encoder(std::int64_t in_dim, std::int64_t d_h = 6) {
    EncoderConfig c;
    c.in_dim = in_dim;
    c.d_h = d_h;
    c.n_blocks = 1;
    return c;
}

SacAgent tiny_agent(std::uint64_t seed, SacConfig sc = {}) {
    Rng rng(seed);
    if (sc.target_entropy == 0.0) sc.target_entropy = -0.5;
    return SacAgent(tiny_encoder(3), tiny_encoder(4), 1, make_atoms(-1, 1, 11), sc, rng);
}

NormalizedBatch random_batch(std::int64_t size, Rng& rng) {
    NormalizedBatch b;
    b.size = size;
    b.obs_dim = 3;
    b.act_dim = 1;
    b.obs = random_vector(static_cast<std::size_t>(size * 3), rng);
    b.action = random_vector(static_cast<std::size_t>(size), rng);
    b.reward = random_vector(static_cast<std::size_t>(size), rng, -0.5, 0.5);
    b.next_obs = random_vector(static_cast<std::size_t>(size * 3), rng);
    b.terminated.assign(static_cast<std::size_t>(size), 0.0);
    return b;
}

double feature_row_norm_dev(const Tensor& f) {
    double worst = 0.0;
    const std::int64_t rows = f.rows(), d = f.cols();
    for (std::int64_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (std::int64_t j = 0; j < d; ++j) ss += f.value()[r * d + j] * f.value()[r * d + j];
        worst = std::max(worst, std::abs(std::sqrt(ss) - 1.0));
    }
    return worst;
}

double weight_row_norm_dev(std::vector<ParamRef>& params) {
    double worst = 0.0;
    for (auto& p : params) {
        if (!p.constrained) continue;
        const std::int64_t rows = p.tensor.rows(), cols = p.tensor.cols();
        for (std::int64_t r = 0; r < rows; ++r) {
            double ss = 0.0;
            for (std::int64_t c = 0; c < cols; ++c)
                ss += p.tensor.value()[r * cols + c] * p.tensor.value()[r * cols + c];
            worst = std::max(worst, std::abs(std::sqrt(ss) - 1.0));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("criterion 1: gradient correctness of primitives and composite losses") {
    Timer timer;
    bool pass = true;
    double worst_prim = 0.0, worst_comp = 0.0;
    Rng rng(1001);

    // --- primitives, 100 randomized instances each
    for (int inst = 0; inst < 100; ++inst) {
        {
            Tensor a = Tensor::param({3, 4}, random_vector(12, rng));
            Tensor b = Tensor::param({4, 2}, random_vector(8, rng));
            Tensor w = Tensor::from({3, 2}, random_vector(6, rng));
            worst_prim = std::max(worst_prim,
                                  max_grad_rel_error({a, b}, [&] { return sum_all(mul(matmul(a, b), w)); }));
        }
        {
            Tensor x = Tensor::param({2, 5}, random_vector(10, rng));
            Tensor w = Tensor::param({3, 5}, random_vector(15, rng));
            Tensor wt = Tensor::from({2, 3}, random_vector(6, rng));
            worst_prim = std::max(worst_prim,
                                  max_grad_rel_error({x, w}, [&] { return sum_all(mul(linear(x, w), wt)); }));
        }
        {
            std::vector<double> v = random_vector(8, rng);
            for (auto& x : v)
                if (std::abs(x) < 1e-3) x = 0.25;  // keep clear of the relu kink
            Tensor p = Tensor::param({8}, v);
            Tensor w = Tensor::from({8}, random_vector(8, rng));
            worst_prim =
                std::max(worst_prim, max_grad_rel_error({p}, [&] { return sum_all(mul(relu(p), w)); }));
        }
        {
            Tensor p = Tensor::param({2, 6}, random_vector(12, rng, -3, 3));
            Tensor w = Tensor::from({2, 6}, random_vector(12, rng));
            worst_prim = std::max(
                worst_prim, max_grad_rel_error({p}, [&] { return sum_all(mul(softmax_lastaxis(p), w)); }));
        }
        {
            Tensor p = Tensor::param({6}, random_vector(6, rng, -2, 2));
            Tensor w = Tensor::from({6}, random_vector(6, rng));
            worst_prim = std::max(worst_prim, max_grad_rel_error({p}, [&] {
                                      return sum_all(mul(l2_normalize_lastaxis(p), w));
                                  }));
        }
        {
            Tensor p = Tensor::param({2, 5}, random_vector(10, rng, -2, 2));
            Tensor w = Tensor::from({2, 5}, random_vector(10, rng));
            worst_prim = std::max(
                worst_prim, max_grad_rel_error({p}, [&] { return sum_all(mul(layernorm_lastaxis(p), w)); }));
        }
        {
            Tensor p = Tensor::param({5}, random_vector(5, rng, 0.3, 2.0));
            Tensor q = Tensor::param({5}, random_vector(5, rng, 0.5, 1.5));
            worst_prim = std::max(worst_prim, max_grad_rel_error({p, q}, [&] {
                                      return mean_all(add(exp(tanh(p)), log(div(q, p))));
                                  }));
        }
    }
    pass = pass && worst_prim < 1e-5;

    // --- composite losses on tiny networks, 100 randomized instances each
    for (int inst = 0; inst < 100; ++inst) {
        SacAgent agent = tiny_agent(2000 + static_cast<std::uint64_t>(inst));
        NormalizedBatch b = random_batch(2, rng);
        Tensor obs = agent.make_obs_tensor(b);
        Tensor in = concat_lastaxis(obs, Tensor::from({2, 1}, b.action));
        Rng target_rng(3000 + inst);
        std::vector<double> target = agent.critic_target_dist(b, target_rng);
        Tensor y = Tensor::from({2, 11}, target);

        // KL critic loss through the full critic forward
        std::vector<Tensor> critic_tensors;
        for (auto& p : agent.critic_params()) critic_tensors.push_back(p.tensor);
        worst_comp = std::max(worst_comp, max_grad_rel_error(critic_tensors, [&] {
                                  return add(kl_critic_loss(agent.critic1().forward(in).probs, y),
                                             kl_critic_loss(agent.critic2().forward(in).probs, y));
                              }));

        // actor loss
        std::vector<Tensor> actor_tensors;
        for (auto& p : agent.actor_params()) actor_tensors.push_back(p.tensor);
        worst_comp = std::max(worst_comp, max_grad_rel_error(actor_tensors, [&] {
                                  Rng noise(4000 + inst);
                                  return agent.actor_loss_parts(obs, noise).loss;
                              }));

        // temperature loss
        Tensor logp = Tensor::from({2, 1}, random_vector(2, rng, -2, 2));
        worst_comp = std::max(worst_comp, max_grad_rel_error({agent.log_alpha()}, [&] {
                                  return agent.temperature_loss(logp);
                              }));

        // BC loss with the detached Q-magnitude weight frozen for the oracle
        Tensor data_actions = Tensor::from({2, 1}, random_vector(2, rng, -0.9, 0.9));
        Rng nw(5000 + inst);
        const double w0 = 0.1 * std::abs(agent.actor_loss_parts(obs, nw).mean_q);
        worst_comp = std::max(worst_comp, max_grad_rel_error(actor_tensors, [&] {
                                  Rng noise(5000 + inst);
                                  auto parts = agent.actor_loss_parts(obs, noise);
                                  Tensor diff = sub(parts.sample.action, data_actions);
                                  return add(parts.loss, scale(mean_all(mul(diff, diff)), w0));
                              }));
    }
    pass = pass && worst_comp < 1e-4;

    std::ostringstream detail;
    detail << "primitive max rel err " << worst_prim << " (< 1e-5), composite max rel err " << worst_comp
           << " (< 1e-4)";
    report(1, pass, detail.str(), timer.seconds());
    CHECK(pass);
}

TEST_CASE("criterion 3: scaler initialization preserves unit norm in expectation") {
    Timer timer;
    Rng rng(1003);
    const std::int64_t d_h = 512;
    Tensor w = init_orthonormal(d_h, 2, rng);
    const double gain = std::sqrt(2.0 / static_cast<double>(d_h));
    double acc = 0.0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        const double phi = rng.uniform(0.0, 6.283185307179586);
        const double h0 = std::cos(phi), h1 = std::sin(phi);
        double ss = 0.0;
        for (std::int64_t r = 0; r < d_h; ++r) {
            const double z = gain * (w.value()[r * 2] * h0 + w.value()[r * 2 + 1] * h1);
            ss += z * z;
        }
        acc += ss;
    }
    const double mean_sq = acc / trials;
    const bool pass = mean_sq > 0.95 && mean_sq < 1.05;
    std::ostringstream detail;
    detail << "mean squared output norm " << mean_sq << " over " << trials << " trials (1 +/- 5%)";
    report(3, pass, detail.str(), timer.seconds());
    CHECK(pass);
}

TEST_CASE("criterion 4: lerp error against the exact geodesic shrinks quadratically") {
    Timer timer;
    Rng rng(1004);
    bool pass = true;
    double lo_ratio = 1.0, hi_ratio = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> h(8), ht(8);
        double sh = 0.0, st = 0.0;
        for (int i = 0; i < 8; ++i) {
            h[i] = rng.normal();
            ht[i] = rng.normal();
            sh += h[i] * h[i];
            st += ht[i] * ht[i];
        }
        for (int i = 0; i < 8; ++i) {
            h[i] /= std::sqrt(sh);
            ht[i] /= std::sqrt(st);
        }
        auto err_at = [&](double alpha) {
            Tensor mixed = lerp_mix(Tensor::from({1, 8}, h), Tensor::from({1, 8}, ht),
                                    Tensor::from({8}, std::vector<double>(8, alpha)));
            double dot = 0.0;
            for (int i = 0; i < 8; ++i) dot += h[i] * ht[i];
            std::vector<double> tangent(8);
            double tnorm = 0.0;
            for (int i = 0; i < 8; ++i) {
                tangent[i] = alpha * (ht[i] - dot * h[i]);
                tnorm += tangent[i] * tangent[i];
            }
            tnorm = std::sqrt(tnorm);
            double err = 0.0;
            for (int i = 0; i < 8; ++i) {
                const double geo = std::cos(tnorm) * h[i] + std::sin(tnorm) * tangent[i] / tnorm;
                err += (mixed.value()[i] - geo) * (mixed.value()[i] - geo);
            }
            return std::sqrt(err);
        };
        const double ratio = err_at(1e-3) / err_at(1e-2);
        lo_ratio = std::min(lo_ratio, ratio);
        hi_ratio = std::max(hi_ratio, ratio);
        pass = pass && ratio > 0.005 && ratio < 0.02;
    }
    std::ostringstream detail;
    detail << "error(1e-3)/error(1e-2) in [" << lo_ratio << ", " << hi_ratio << "] (target [0.005, 0.02])";
    report(4, pass, detail.str(), timer.seconds());
    CHECK(pass);
}

TEST_CASE("criterion 5: categorical projection mass, identity, and q bounds") {
    Timer timer;
    bool pass = true;
    Rng rng(1005);
    ReturnSupport sup = make_atoms(-5, 5, 101);

    double worst_mass = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> values(101), probs(101);
        double total = 0.0;
        for (int i = 0; i < 101; ++i) {
            values[i] = rng.uniform(-9, 9);
            probs[i] = rng.uniform(0, 1);
            total += probs[i];
        }
        for (auto& p : probs) p /= total;
        auto out = categorical_project(sup, values, probs);
        double mass = 0.0;
        for (double v : out) mass += v;
        worst_mass = std::max(worst_mass, std::abs(mass - 1.0));
    }
    pass = pass && worst_mass < 1e-12;

    // identity on atom-supported targets
    double worst_identity = 0.0;
    {
        std::vector<double> probs = random_vector(101, rng, 0, 1);
        double total = 0.0;
        for (double v : probs) total += v;
        for (auto& v : probs) v /= total;
        auto out = categorical_project(sup, sup.atoms, probs);
        for (int i = 0; i < 101; ++i) worst_identity = std::max(worst_identity, std::abs(out[i] - probs[i]));
    }
    pass = pass && worst_identity < 1e-12;

    // q bounds on randomly initialized and randomly driven critics
    double q_lo = 0.0, q_hi = 0.0;
    {
        Rng crng(7);
        EncoderConfig cfg = tiny_encoder(4, 16);
        Critic critic(cfg, sup.atoms, false, crng);
        for (int trial = 0; trial < 200; ++trial) {
            Tensor x = Tensor::from({4, 4}, random_vector(16, crng, -6, 6));
            CriticOutput out = critic.forward(x);
            for (double q : out.q.value()) {
                q_lo = std::min(q_lo, q);
                q_hi = std::max(q_hi, q);
                pass = pass && q >= sup.g_min && q <= sup.g_max;
            }
        }
    }

    std::ostringstream detail;
    detail << "mass dev " << worst_mass << " (< 1e-12), identity dev " << worst_identity
           << " (< 1e-12), q range [" << q_lo << ", " << q_hi << "] within [-5, 5]";
    report(5, pass, detail.str(), timer.seconds());
    CHECK(pass);
}

TEST_CASE("criterion 6: reward scaling keeps td targets inside the support") {
    Timer timer;
    // Synthetic high-return stream: constant reward 100, gamma 0.9, episodes
    // of 2000 steps over 10,000 total. The first episode saturates the
    // running maximum; from then on every realized scaled return-to-go (the
    // clamping-free k=1 target chain) must stay inside the support wherever
    // the running-max branch is the active denominator.
    const double gamma = 0.9, gsup = 5.0, r = 100.0;
    const int ep_len = 2000, episodes = 5;
    RewardScaler rs(gamma, gsup);
    bool pass = true;
    int active_count = 0, checked = 0;
    double worst = 0.0;
    for (int ep = 0; ep < episodes; ++ep) {
        std::vector<double> scaled(ep_len);
        std::vector<bool> active(ep_len);
        for (int t = 0; t < ep_len; ++t) {
            scaled[t] = rs.step(r, t == 0);
            active[t] = rs.bounding_active();
        }
        if (ep == 0) continue;
        std::vector<double> togo(ep_len + 1, 0.0);
        for (int t = ep_len - 1; t >= 0; --t) togo[t] = scaled[t] + gamma * togo[t + 1];
        for (int t = 0; t < ep_len; ++t) {
            if (!active[t]) continue;
            ++active_count;
            worst = std::max(worst, togo[t]);
            pass = pass && togo[t] <= gsup * (1.0 + 1e-6);
        }
        checked += ep_len;
    }
    pass = pass && active_count > checked / 2;
    std::ostringstream detail;
    detail << "max scaled return-to-go " << worst << " <= " << gsup * (1.0 + 1e-6) << ", bounding active on "
           << active_count << "/" << checked << " checked steps";
    report(6, pass, detail.str(), timer.seconds());
    CHECK(pass);
}

TEST_CASE("criterion 2: unit-feature and unit-weight invariants over a pendulum run") {
    Timer timer;
    TrainConfig cfg = desk_config(12);
    // 5,000 updates: 5,000 warmup env steps, then 2,500 learning steps at utd 2
    cfg.total_steps = 7500;
    Trainer trainer(cfg);

    double worst_feature = 0.0, worst_weight = 0.0, q_lo = 1e100, q_hi = -1e100;
    std::uint64_t updates_checked = 0;
    TrainHooks hooks;
    hooks.on_update = [&](const UpdateDiag& diag, SacAgent& agent) {
        ++updates_checked;
        const std::size_t enc_c = 1 + static_cast<std::size_t>(cfg.critic_blocks);
        const std::size_t enc_a = 1 + static_cast<std::size_t>(cfg.actor_blocks);
        for (std::size_t i = 0; i < enc_c; ++i) {
            worst_feature = std::max(worst_feature, feature_row_norm_dev(diag.critic1_features[i]));
            worst_feature = std::max(worst_feature, feature_row_norm_dev(diag.critic2_features[i]));
        }
        for (std::size_t i = 0; i < enc_a; ++i)
            worst_feature = std::max(worst_feature, feature_row_norm_dev(diag.actor_features[i]));
        worst_weight = std::max(worst_weight, weight_row_norm_dev(agent.actor_params()));
        worst_weight = std::max(worst_weight, weight_row_norm_dev(agent.critic_params()));
        worst_weight = std::max(worst_weight, weight_row_norm_dev(agent.target_params()));
        q_lo = std::min(q_lo, diag.q_min);
        q_hi = std::max(q_hi, diag.q_max);
    };
    trainer.run("", &hooks);

    bool pass = updates_checked == 5000 && worst_feature < 1e-6 && worst_weight < 1e-9;
    const bool q_ok = q_lo >= cfg.g_min && q_hi <= cfg.g_max;
    pass = pass && q_ok;
    std::ostringstream detail;
    detail << updates_checked << " updates; max feature norm dev " << worst_feature
           << " (< 1e-6), max weight row dev " << worst_weight << " (< 1e-9), q range [" << q_lo << ", "
           << q_hi << "]";
    report(2, pass, detail.str(), timer.seconds());
    CHECK(pass);
}

TEST_CASE("criterion 9: determinism and exact checkpoint resume") {
    Timer timer;
    namespace fs = std::filesystem;
    const std::string dir = "/tmp/hypersac_acceptance_c9";
    fs::remove_all(dir);

    TrainConfig cfg = desk_config(21);
    cfg.total_steps = 6000;
    cfg.learning_starts = 2000;
    cfg.checkpoint_interval = 3000;

    Trainer a(cfg);
    RunResult ra = a.run(dir + "/a");
    Trainer b(cfg);
    RunResult rb = b.run(dir + "/b");
    (void)rb;

    std::ifstream fa(dir + "/a/metrics.csv", std::ios::binary), fb(dir + "/b/metrics.csv", std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    const bool identical = !sa.str().empty() && sa.str() == sb.str();

    Trainer c(cfg);
    c.load_checkpoint(dir + "/a/checkpoints/step_3000.ckpt");
    RunResult rc = c.run("");
    std::vector<MetricsRow> tail;
    for (const auto& m : ra.metrics)
        if (m.env_step > 3000) tail.push_back(m);
    bool resume_ok = rc.metrics.size() == tail.size();
    for (std::size_t i = 0; resume_ok && i < tail.size(); ++i)
        resume_ok = metrics_csv_row(rc.metrics[i]) == metrics_csv_row(tail[i]);

    const bool pass = identical && resume_ok;
    std::ostringstream detail;
    detail << "same-seed metrics byte-identical: " << (identical ? "yes" : "no")
           << "; resumed rows identical: " << (resume_ok ? "yes" : "no") << " (" << tail.size()
           << " rows after the checkpoint)";
    report(9, pass, detail.str(), timer.seconds());
    CHECK(pass);
    fs::remove_all(dir);
}

TEST_CASE("criterion 8: encoder elr drifts less than under the layernorm variant") {
    Timer timer;
    TrainConfig base = desk_config(31);
    base.total_steps = 12000;
    TrainConfig ln = ablate(base, "use_layernorm");

    double drift_default = 0.0, drift_ln = 0.0;
    std::size_t rows_default = 0, rows_ln = 0;
    std::thread worker([&] {
        Trainer t(base);
        RunResult res = t.run("");
        TelemetrySummary s = summarize_telemetry(res.telemetry);
        drift_default = s.enc_elr_drift_ratio;
        rows_default = s.rows;
    });
    {
        Trainer t(ln);
        RunResult res = t.run("");
        TelemetrySummary s = summarize_telemetry(res.telemetry);
        drift_ln = s.enc_elr_drift_ratio;
        rows_ln = s.rows;
    }
    worker.join();

    const bool pass = rows_default > 20 && rows_ln > 20 && drift_default < drift_ln;
    std::ostringstream detail;
    detail << "second-half encoder ELR max/min: default " << drift_default << " vs layernorm " << drift_ln
           << " (" << rows_default << "/" << rows_ln << " records)";
    report(8, pass, detail.str(), timer.seconds());
    CHECK(pass);
}

TEST_CASE("criterion 7: pendulum swing-up learns and beats the triple ablation") {
    Timer timer;
    const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

    struct RunOut {
        double best = 0.0;
        double final_ret = 0.0;
    };
    auto run_one = [](const TrainConfig& cfg) {
        Trainer t(cfg);
        RunResult res = t.run("");
        return RunOut{res.best_eval_return, res.final_eval_return};
    };

    std::vector<TrainConfig> jobs;
    for (auto s : seeds) jobs.push_back(desk_config(s));
    for (auto s : seeds) {
        TrainConfig abl = desk_config(s);
        abl = ablate(abl, "mse_critic");
        abl = ablate(abl, "no_reward_scaling");
        abl = ablate(abl, "no_input_l2");
        jobs.push_back(abl);
    }

    std::vector<RunOut> results(jobs.size());
    // two jobs at a time: one on a worker thread, one on this thread
    for (std::size_t i = 0; i < jobs.size(); i += 2) {
        if (i + 1 < jobs.size()) {
            std::thread worker([&, i] { results[i + 1] = run_one(jobs[i + 1]); });
            results[i] = run_one(jobs[i]);
            worker.join();
        } else {
            results[i] = run_one(jobs[i]);
        }
        std::printf("  [criterion 7] progress: %zu/%zu runs done (%.0f s)\n", std::min(i + 2, jobs.size()),
                    jobs.size(), timer.seconds());
        std::fflush(stdout);
    }

    int solved = 0;
    double default_mean_final = 0.0, ablation_mean_final = 0.0;
    std::ostringstream per_seed;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (results[i].best >= -300.0) ++solved;
        default_mean_final += results[i].final_ret;
        ablation_mean_final += results[seeds.size() + i].final_ret;
        per_seed << " s" << seeds[i] << ": best " << results[i].best << " / abl final "
                 << results[seeds.size() + i].final_ret << ";";
    }
    default_mean_final /= static_cast<double>(seeds.size());
    ablation_mean_final /= static_cast<double>(seeds.size());

    const bool learn_ok = solved >= 4;
    const bool ablation_ok = ablation_mean_final <= default_mean_final;
    const bool pass = learn_ok && ablation_ok;
    std::ostringstream detail;
    detail << solved << "/5 seeds reached eval >= -300 within 30k steps; mean final return default "
           << default_mean_final << " vs triple ablation " << ablation_mean_final << ";" << per_seed.str();
    report(7, pass, detail.str(), timer.seconds());
    CHECK(pass);
}

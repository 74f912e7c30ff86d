#ifndef HYPERSAC_SAC_HPP_
#define HYPERSAC_SAC_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hypersac/common.hpp"
#include "hypersac/distributional.hpp"
#include "hypersac/network.hpp"
#include "hypersac/optim.hpp"
#include "hypersac/tensor.hpp"

namespace hypersac {

// target <- (1 - tau) * target + tau * online, elementwise.
inline void ema_update(Tensor& target, const Tensor& online, double tau) {
    if (tau <= 0.0 || tau > 1.0) throw UsageError("ema_update: tau must be in (0, 1], got " + std::to_string(tau));
    if (target.shape() != online.shape()) throw DimensionError("ema_update: shape mismatch");
    auto& t = target.mutable_value();
    const auto& o = online.value();
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (1.0 - tau) * t[i] + tau * o[i];
}

struct SacConfig {
    double gamma = 0.99;
    double tau = 5e-3;
    double init_alpha = 1e-2;
    double target_entropy = 0.0;  // usually -|A|/2
    double beta1 = 0.9;
    double beta2 = 0.999;
    bool clipped_double_q = false;
    bool mse_critic = false;
    bool hard_target = false;
    std::uint64_t hard_target_interval = 200;  // updates between full copies
};

// One transition batch, observations already RSNorm-ed.
struct NormalizedBatch {
    std::int64_t size = 0;
    std::int64_t obs_dim = 0;
    std::int64_t act_dim = 0;
    std::vector<double> obs;         // [B x obs_dim]
    std::vector<double> action;      // [B x act_dim]
    std::vector<double> reward;      // [B], already scaled
    std::vector<double> next_obs;    // [B x obs_dim]
    std::vector<double> terminated;  // [B], 1.0 on failure/goal termination
};

struct UpdateDiag {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double alpha_loss = 0.0;
    double alpha = 0.0;
    double q_min = 0.0;  // over the batch, both online critics
    double q_max = 0.0;
    std::vector<Tensor> critic1_features;
    std::vector<Tensor> critic2_features;
    std::vector<Tensor> actor_features;
};

struct UpdateHooks {
    // Runs after the critic backward pass, before the optimizer step and the
    // weight projection. Gradients of the critic loss are present on all
    // critic parameters at this point.
    std::function<void(const std::vector<Tensor>& critic1_features)> after_critic_backward;
};

namespace detail {

// Temporarily clears requires_grad so backward skips gradient accumulation
// into these parameters (the graph through their outputs is still recorded).
class FreezeParams {
public:
    explicit FreezeParams(std::vector<ParamRef>& params) : params_(params) {
        for (auto& p : params_) p.tensor.node()->requires_grad = false;
    }
    ~FreezeParams() {
        for (auto& p : params_) p.tensor.node()->requires_grad = true;
    }

private:
    std::vector<ParamRef>& params_;
};

}  // namespace detail

// Soft actor-critic over the hyperspherical networks: distributional critic
// with cross-entropy loss, tanh-Gaussian actor, auto-tuned temperature, EMA
// targets, and post-step weight projection.
class SacAgent {
public:
    SacAgent() = default;

    SacAgent(const EncoderConfig& actor_cfg, const EncoderConfig& critic_cfg, std::int64_t action_dim,
             const ReturnSupport& support, const SacConfig& cfg, Rng& rng)
        : cfg_(cfg),
          support_(support),
          action_dim_(action_dim),
          actor_(actor_cfg, action_dim, rng),
          critic1_(critic_cfg, support.atoms, cfg.mse_critic, rng),
          critic2_(critic_cfg, support.atoms, cfg.mse_critic, rng),
          target1_(critic_cfg, support.atoms, cfg.mse_critic, rng),
          target2_(critic_cfg, support.atoms, cfg.mse_critic, rng),
          log_alpha_(Tensor::param({1}, {std::log(cfg.init_alpha)})),
          actor_opt_(cfg.beta1, cfg.beta2),
          critic_opt_(cfg.beta1, cfg.beta2),
          alpha_opt_(cfg.beta1, cfg.beta2) {
        actor_.collect_params("actor", actor_params_);
        critic1_.collect_params("critic1", critic_params_);
        critic2_.collect_params("critic2", critic_params_);
        target1_.collect_params("target1", target_params_);
        target2_.collect_params("target2", target_params_);
        alpha_params_.push_back({"log_alpha", log_alpha_, false, false});
        // Targets start as exact copies of the online critics.
        for (std::size_t i = 0; i < target_params_.size(); ++i) {
            target_params_[i].tensor.mutable_value() = critic_params_[i].tensor.value();
            target_params_[i].tensor.node()->requires_grad = false;
        }
    }

    double alpha() const { return std::exp(log_alpha_.item()); }

    Tensor make_obs_tensor(const NormalizedBatch& b) const {
        return Tensor::from({b.size, b.obs_dim}, b.obs);
    }

    // Stochastic policy action for one observation; draws one normal vector.
    std::vector<double> act_stochastic(const std::vector<double>& obs_norm, Rng& rng) const {
        NoGradGuard ng;
        Tensor obs = Tensor::from({1, static_cast<std::int64_t>(obs_norm.size())}, obs_norm);
        GaussianParams g = actor_.forward(obs);
        std::vector<double> noise(static_cast<std::size_t>(action_dim_));
        for (auto& v : noise) v = rng.normal();
        PolicySample s = sample_squashed(g, Tensor::from({1, action_dim_}, noise));
        return s.action.value();
    }

    std::vector<double> act_deterministic(const std::vector<double>& obs_norm) const {
        NoGradGuard ng;
        Tensor obs = Tensor::from({1, static_cast<std::int64_t>(obs_norm.size())}, obs_norm);
        return actor_.deterministic_action(obs).value();
    }

    // Per-sample categorical targets: atoms shifted to
    //   r + (1 - terminated) * gamma * (delta_i - alpha * log pi(a'|o'))
    // and projected back onto the support. With clipped double Q the source
    // distribution comes from the target critic with the lower expected Q.
    std::vector<double> critic_target_dist(const NormalizedBatch& b, Rng& rng) const {
        NoGradGuard ng;
        const std::int64_t n = support_.n_atom;
        Tensor next_obs = Tensor::from({b.size, b.obs_dim}, b.next_obs);
        GaussianParams g = actor_.forward(next_obs);
        PolicySample s = sample_squashed(g, normal_noise(b.size, rng));
        Tensor next_in = concat_lastaxis(next_obs, s.action);
        CriticOutput t1 = target1_.forward(next_in);
        CriticOutput t2;
        if (cfg_.clipped_double_q) t2 = target2_.forward(next_in);

        const double a = alpha();
        std::vector<double> out(static_cast<std::size_t>(b.size * n));
        std::vector<double> values(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < b.size; ++i) {
            const bool use_t2 =
                cfg_.clipped_double_q && t2.q.value()[static_cast<std::size_t>(i)] < t1.q.value()[static_cast<std::size_t>(i)];
            const double* src = (use_t2 ? t2.probs : t1.probs).value().data() + i * n;
            const double logp = s.log_prob.value()[static_cast<std::size_t>(i)];
            const double cont = (1.0 - b.terminated[static_cast<std::size_t>(i)]) * cfg_.gamma;
            const double r = b.reward[static_cast<std::size_t>(i)];
            for (std::int64_t j = 0; j < n; ++j)
                values[static_cast<std::size_t>(j)] = r + cont * (support_.atoms[static_cast<std::size_t>(j)] - a * logp);
            std::vector<double> proj =
                categorical_project(support_, values, std::vector<double>(src, src + n));
            std::copy(proj.begin(), proj.end(), out.begin() + i * n);
        }
        return out;
    }

    // Scalar targets for the mse-critic mode: r + (1-t) * gamma * (Q' - alpha log pi').
    std::vector<double> critic_target_scalar(const NormalizedBatch& b, Rng& rng) const {
        NoGradGuard ng;
        Tensor next_obs = Tensor::from({b.size, b.obs_dim}, b.next_obs);
        GaussianParams g = actor_.forward(next_obs);
        PolicySample s = sample_squashed(g, normal_noise(b.size, rng));
        Tensor next_in = concat_lastaxis(next_obs, s.action);
        CriticOutput t1 = target1_.forward(next_in);
        CriticOutput t2;
        if (cfg_.clipped_double_q) t2 = target2_.forward(next_in);
        const double a = alpha();
        std::vector<double> out(static_cast<std::size_t>(b.size));
        for (std::int64_t i = 0; i < b.size; ++i) {
            double q = t1.q.value()[static_cast<std::size_t>(i)];
            if (cfg_.clipped_double_q) q = std::min(q, t2.q.value()[static_cast<std::size_t>(i)]);
            const double logp = s.log_prob.value()[static_cast<std::size_t>(i)];
            out[static_cast<std::size_t>(i)] = b.reward[static_cast<std::size_t>(i)] +
                                               (1.0 - b.terminated[static_cast<std::size_t>(i)]) * cfg_.gamma *
                                                   (q - a * logp);
        }
        return out;
    }

    struct ActorLossParts {
        Tensor loss;
        Tensor log_prob;  // [B x 1], on graph
        double mean_q = 0.0;
        PolicySample sample;
    };

    // mean over batch of (alpha * log pi(a|o) - Q(o, a)) with a reparameterized.
    // Q is the minimum over both critics when clipped double Q is on.
    ActorLossParts actor_loss_parts(const Tensor& obs, Rng& rng, std::vector<Tensor>* features = nullptr) {
        GaussianParams g = actor_.forward(obs, features);
        PolicySample s = sample_squashed(g, normal_noise(obs.rows(), rng));
        Tensor in = concat_lastaxis(obs, s.action);
        detail::FreezeParams freeze(critic_params_);
        Tensor q = critic1_.forward(in).q;
        if (cfg_.clipped_double_q) q = minimum(q, critic2_.forward(in).q);
        ActorLossParts parts;
        parts.loss = mean_all(sub(scale(s.log_prob, alpha()), q));
        parts.log_prob = s.log_prob;
        double mq = 0.0;
        for (double v : q.value()) mq += v;
        parts.mean_q = mq / static_cast<double>(q.numel());
        parts.sample = s;
        return parts;
    }

    // Actor loss augmented with a Q-magnitude-weighted behavioral-cloning
    // term: lambda * |mean_batch Q| * mean((pi(s) - a)^2), weight detached.
    Tensor bc_actor_loss(const Tensor& obs, const Tensor& dataset_actions, double lambda, Rng& rng) {
        ActorLossParts parts = actor_loss_parts(obs, rng);
        if (lambda == 0.0) return parts.loss;
        Tensor sq = mean_all(mul(sub(parts.sample.action, dataset_actions),
                                 sub(parts.sample.action, dataset_actions)));
        return add(parts.loss, scale(sq, lambda * std::abs(parts.mean_q)));
    }

    // mean of (-exp(log_alpha) * (log pi + target_entropy)); log pi detached.
    Tensor temperature_loss(const Tensor& log_prob_detached) {
        Tensor inner = offset(log_prob_detached, cfg_.target_entropy);
        return neg(mean_all(mul(exp(log_alpha_), inner)));
    }

    // One full update: critic step, actor step, temperature step, projection
    // of every constrained matrix, then the target EMA (re-projected).
    void update(const NormalizedBatch& b, double lr, Rng& rng, UpdateDiag* diag = nullptr,
                const UpdateHooks* hooks = nullptr) {
        if (b.size < 1) throw UsageError("SacAgent::update: empty batch");
        ++update_count_;

        Tensor obs = Tensor::from({b.size, b.obs_dim}, b.obs);
        Tensor act = Tensor::from({b.size, b.act_dim}, b.action);
        Tensor in = concat_lastaxis(obs, act);

        // -- critic step
        zero_grads(critic_params_);
        std::vector<Tensor> feats1, feats2;
        Tensor critic_loss;
        if (cfg_.mse_critic) {
            std::vector<double> target = critic_target_scalar(b, rng);
            Tensor y = Tensor::from({b.size, 1}, target);
            CriticOutput c1 = critic1_.forward(in, &feats1);
            CriticOutput c2 = critic2_.forward(in, &feats2);
            Tensor d1 = sub(c1.q, y), d2 = sub(c2.q, y);
            critic_loss = add(mean_all(mul(d1, d1)), mean_all(mul(d2, d2)));
            record_q_range(c1.q, c2.q, diag);
        } else {
            std::vector<double> target = critic_target_dist(b, rng);
            Tensor y = Tensor::from({b.size, support_.n_atom}, target);
            CriticOutput c1 = critic1_.forward(in, &feats1);
            CriticOutput c2 = critic2_.forward(in, &feats2);
            critic_loss = add(kl_critic_loss(c1.probs, y), kl_critic_loss(c2.probs, y));
            record_q_range(c1.q, c2.q, diag);
        }
        check_finite(critic_loss.item(), "critic loss");
        critic_loss.backward();
        if (hooks && hooks->after_critic_backward) hooks->after_critic_backward(feats1);
        critic_opt_.step(critic_params_, lr);

        // -- actor step
        zero_grads(actor_params_);
        zero_grads(critic_params_);
        std::vector<Tensor> actor_feats;
        ActorLossParts parts = actor_loss_parts(obs, rng, diag ? &actor_feats : nullptr);
        check_finite(parts.loss.item(), "actor loss");
        parts.loss.backward();
        actor_opt_.step(actor_params_, lr);

        // -- temperature step
        zero_grads(alpha_params_);
        Tensor alpha_loss = temperature_loss(parts.log_prob.detach());
        check_finite(alpha_loss.item(), "temperature loss");
        alpha_loss.backward();
        alpha_opt_.step(alpha_params_, lr);

        // -- projection of all constrained matrices
        for (auto& p : actor_params_)
            if (p.constrained) project_weights(p.tensor);
        for (auto& p : critic_params_)
            if (p.constrained) project_weights(p.tensor);

        // -- target update (EMA of unit rows leaves the sphere; re-project)
        if (cfg_.hard_target) {
            if (update_count_ % cfg_.hard_target_interval == 0)
                for (std::size_t i = 0; i < target_params_.size(); ++i)
                    target_params_[i].tensor.mutable_value() = critic_params_[i].tensor.value();
        } else {
            for (std::size_t i = 0; i < target_params_.size(); ++i)
                ema_update(target_params_[i].tensor, critic_params_[i].tensor, cfg_.tau);
        }
        for (auto& p : target_params_)
            if (p.constrained) project_weights(p.tensor);

        if (diag) {
            diag->critic_loss = critic_loss.item();
            diag->actor_loss = parts.loss.item();
            diag->alpha_loss = alpha_loss.item();
            diag->alpha = alpha();
            diag->critic1_features = std::move(feats1);
            diag->critic2_features = std::move(feats2);
            diag->actor_features = std::move(actor_feats);
        }
    }

    Actor& actor() { return actor_; }
    Critic& critic1() { return critic1_; }
    Critic& critic2() { return critic2_; }
    Critic& target_critic1() { return target1_; }
    Critic& target_critic2() { return target2_; }
    Tensor& log_alpha() { return log_alpha_; }
    const SacConfig& config() const { return cfg_; }
    const ReturnSupport& support() const { return support_; }
    std::int64_t action_dim() const { return action_dim_; }
    std::uint64_t update_count() const { return update_count_; }
    void restore_update_count(std::uint64_t c) { update_count_ = c; }

    std::vector<ParamRef>& actor_params() { return actor_params_; }
    std::vector<ParamRef>& critic_params() { return critic_params_; }
    std::vector<ParamRef>& target_params() { return target_params_; }
    Adam& actor_opt() { return actor_opt_; }
    Adam& critic_opt() { return critic_opt_; }
    Adam& alpha_opt() { return alpha_opt_; }

    static void zero_grads(std::vector<ParamRef>& params) {
        for (auto& p : params) p.tensor.zero_grad();
    }

private:
    Tensor normal_noise(std::int64_t rows, Rng& rng) const {
        std::vector<double> noise(static_cast<std::size_t>(rows * action_dim_));
        for (auto& v : noise) v = rng.normal();
        return Tensor::from({rows, action_dim_}, std::move(noise));
    }

    static void check_finite(double v, const char* what) {
        if (!std::isfinite(v))
            throw NumericError(std::string("non-finite ") + what + ": " + std::to_string(v));
    }

    static void record_q_range(const Tensor& q1, const Tensor& q2, UpdateDiag* diag) {
        if (!diag) return;
        double lo = q1.value()[0], hi = q1.value()[0];
        for (double v : q1.value()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        for (double v : q2.value()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        diag->q_min = lo;
        diag->q_max = hi;
    }

    SacConfig cfg_;
    ReturnSupport support_;
    std::int64_t action_dim_ = 0;
    Actor actor_;
    Critic critic1_, critic2_, target1_, target2_;
    Tensor log_alpha_;
    Adam actor_opt_, critic_opt_, alpha_opt_;
    std::vector<ParamRef> actor_params_, critic_params_, target_params_, alpha_params_;
    std::uint64_t update_count_ = 0;
};

}  // namespace hypersac

#endif  // HYPERSAC_SAC_HPP_

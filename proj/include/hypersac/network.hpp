#ifndef HYPERSAC_NETWORK_HPP_
#define HYPERSAC_NETWORK_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hypersac/common.hpp"
#include "hypersac/hypersphere.hpp"
#include "hypersac/normalizers.hpp"
#include "hypersac/tensor.hpp"

namespace hypersac {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kSquashEps = 1e-6;
constexpr double kLogStdLow = -10.0;
constexpr double kLogStdHigh = 2.0;

// A named learnable tensor. `constrained` marks unit-row weight matrices that
// are re-projected after every optimizer step; `encoder` splits encoder from
// predictor parameters for telemetry.
struct ParamRef {
    std::string name;
    Tensor tensor;
    bool constrained = false;
    bool encoder = true;
};

struct EncoderConfig {
    std::int64_t in_dim = 0;
    std::int64_t d_h = 128;
    std::int64_t n_blocks = 1;
    double c_shift = 3.0;
    bool no_l2 = false;
    bool no_shift = false;
    bool use_layernorm = false;
    // Design-study overrides; 0 keeps the defaults (sqrt(2/d) gains,
    // alpha_init = 1/(L+1), alpha_scale = 1/sqrt(d)).
    double s_init_override = 0.0;
    double s_scale_override = 0.0;
    double alpha_init_override = 0.0;
    double alpha_scale_override = 0.0;

    double scaler_init(std::int64_t dim) const {
        return s_init_override > 0.0 ? s_init_override : std::sqrt(2.0 / static_cast<double>(dim));
    }
    double scaler_scale(std::int64_t dim) const {
        return s_scale_override > 0.0 ? s_scale_override : std::sqrt(2.0 / static_cast<double>(dim));
    }
    double alpha_init() const {
        return alpha_init_override > 0.0 ? alpha_init_override : 1.0 / static_cast<double>(n_blocks + 1);
    }
    double alpha_scale() const {
        return alpha_scale_override > 0.0 ? alpha_scale_override : 1.0 / std::sqrt(static_cast<double>(d_h));
    }

    void validate() const {
        if (in_dim < 1) throw ConfigError("EncoderConfig: in_dim must be >= 1");
        if (d_h < 1) throw ConfigError("EncoderConfig: d_h must be >= 1");
        if (n_blocks < 1) throw ConfigError("EncoderConfig: number of blocks must be >= 1");
        if (!no_shift && c_shift <= 0.0) throw ConfigError("EncoderConfig: c_shift must be > 0");
    }
};

// Maps a normalized observation (optionally with the action concatenated) to
// the latent feature h^L. Default path keeps every intermediate on the unit
// sphere; the layernorm path substitutes pre-LN residual blocks with plain
// linear layers and no norm constraint.
class Encoder {
public:
    Encoder() = default;

    Encoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
        cfg.validate();
        const std::int64_t embed_in = cfg.in_dim + ((cfg.no_shift || cfg.use_layernorm) ? 0 : 1);
        if (cfg.use_layernorm) {
            plain_embed_ = init_orthonormal(cfg.d_h, embed_in, rng);
            plain_blocks_.reserve(static_cast<std::size_t>(cfg.n_blocks));
            for (std::int64_t l = 0; l < cfg.n_blocks; ++l) {
                PlainBlock b;
                b.w1 = init_orthonormal(4 * cfg.d_h, cfg.d_h, rng);
                b.w2 = init_orthonormal(cfg.d_h, 4 * cfg.d_h, rng);
                plain_blocks_.push_back(std::move(b));
            }
        } else {
            embed_ = HypersphereLinear(embed_in, cfg.d_h, cfg.scaler_init(cfg.d_h), cfg.scaler_scale(cfg.d_h), rng);
            blocks_.reserve(static_cast<std::size_t>(cfg.n_blocks));
            for (std::int64_t l = 0; l < cfg.n_blocks; ++l)
                blocks_.emplace_back(cfg.d_h, cfg.scaler_init(4 * cfg.d_h), cfg.scaler_scale(4 * cfg.d_h),
                                     cfg.alpha_init(), cfg.alpha_scale(), rng);
        }
    }

    // `x` is the RSNorm-ed input batch [B x in_dim]. When `features` is given,
    // each stage's output is appended (embedding first, then block outputs).
    Tensor forward(const Tensor& x, std::vector<Tensor>* features = nullptr) const {
        if (x.cols() != cfg_.in_dim)
            throw DimensionError("Encoder::forward: input " + shape_str(x.shape()) + " vs in_dim " +
                                 std::to_string(cfg_.in_dim));
        if (cfg_.use_layernorm) {
            Tensor h = linear(x, plain_embed_);
            if (features) features->push_back(h);
            for (std::size_t l = 0; l < plain_blocks_.size(); ++l) {
                const auto& b = plain_blocks_[l];
                h = add(h, linear(relu(linear(layernorm_lastaxis(h), b.w1)), b.w2));
                if (l + 1 < plain_blocks_.size()) {
                    if (features) features->push_back(h);
                } else {
                    h = layernorm_lastaxis(h);
                    if (features) features->push_back(h);
                }
            }
            return h;
        }
        Tensor cur = x;
        if (!cfg_.no_shift) cur = append_const_lastaxis(cur, cfg_.c_shift);
        if (!cfg_.no_l2) cur = l2_normalize_lastaxis(cur, kL2Eps);
        Tensor h = embed_.forward(cur, /*renormalize=*/true);
        if (features) features->push_back(h);
        for (const auto& b : blocks_) {
            h = b.forward(h);
            if (features) features->push_back(h);
        }
        return h;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
        if (cfg_.use_layernorm) {
            out.push_back({prefix + "/embed/w", plain_embed_, false, true});
            for (std::size_t l = 0; l < plain_blocks_.size(); ++l) {
                const std::string p = prefix + "/block" + std::to_string(l);
                out.push_back({p + "/w1", plain_blocks_[l].w1, false, true});
                out.push_back({p + "/w2", plain_blocks_[l].w2, false, true});
            }
            return;
        }
        out.push_back({prefix + "/embed/w", embed_.weight(), true, true});
        out.push_back({prefix + "/embed/s", embed_.scaler().stored(), false, true});
        for (std::size_t l = 0; l < blocks_.size(); ++l) {
            const std::string p = prefix + "/block" + std::to_string(l);
            out.push_back({p + "/w1", blocks_[l].mlp_in().weight(), true, true});
            out.push_back({p + "/s", blocks_[l].mlp_in().scaler().stored(), false, true});
            out.push_back({p + "/w2", blocks_[l].mlp_out(), true, true});
            out.push_back({p + "/alpha", blocks_[l].alpha().stored(), false, true});
        }
    }

    const EncoderConfig& config() const { return cfg_; }
    const HypersphereLinear& embed() const { return embed_; }
    const std::vector<LerpBlock>& blocks() const { return blocks_; }

private:
    struct PlainBlock {
        Tensor w1, w2;
    };

    EncoderConfig cfg_;
    HypersphereLinear embed_;
    std::vector<LerpBlock> blocks_;
    Tensor plain_embed_;
    std::vector<PlainBlock> plain_blocks_;
};

// Two-stage output map z = W2 ((W1 h) * s) shared by policy and critic heads.
class OutputHead {
public:
    OutputHead() = default;

    OutputHead(const EncoderConfig& cfg, std::int64_t out_dim, Rng& rng) : use_layernorm_(cfg.use_layernorm) {
        const std::int64_t d_h = cfg.d_h;
        if (use_layernorm_) {
            w1_ = init_orthonormal(d_h, d_h, rng);
        } else {
            hidden_ = HypersphereLinear(d_h, d_h, cfg.scaler_init(d_h), cfg.scaler_scale(d_h), rng);
        }
        w2_ = init_orthonormal(out_dim, d_h, rng);
    }

    Tensor forward(const Tensor& h, std::vector<Tensor>* features = nullptr) const {
        Tensor t = use_layernorm_ ? linear(h, w1_) : hidden_.forward(h, /*renormalize=*/false);
        if (features) features->push_back(t);
        Tensor z = linear(t, w2_);
        if (features) features->push_back(z);
        return z;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
        if (use_layernorm_) {
            out.push_back({prefix + "/w1", w1_, false, false});
        } else {
            out.push_back({prefix + "/w1", hidden_.weight(), true, false});
            out.push_back({prefix + "/s", hidden_.scaler().stored(), false, false});
        }
        out.push_back({prefix + "/w2", w2_, !use_layernorm_, false});
    }

    Tensor& out_weight() { return w2_; }

private:
    bool use_layernorm_ = false;
    HypersphereLinear hidden_;
    Tensor w1_;
    Tensor w2_;
};

struct GaussianParams {
    Tensor mean;     // [B x A]
    Tensor log_std;  // [B x A], always within [kLogStdLow, kLogStdHigh]
};

struct PolicySample {
    Tensor action;    // [B x A] in (-1, 1)
    Tensor log_prob;  // [B x 1]
};

// Log-density of a tanh-squashed Gaussian evaluated at the pre-squash point u,
// including the change-of-variables correction.
inline Tensor squashed_log_prob(const Tensor& mean, const Tensor& log_std, const Tensor& u) {
    Tensor std = exp(log_std);
    Tensor z = div(sub(u, mean), std);
    Tensor a = tanh(u);
    Tensor gauss = offset(sub(scale(mul(z, z), -0.5), log_std), -kHalfLog2Pi);
    Tensor corr = log(offset(neg(mul(a, a)), 1.0 + kSquashEps));
    return sum_lastaxis(sub(gauss, corr));
}

// Reparameterized draw: a = tanh(mean + std * noise) with noise ~ N(0, I).
inline PolicySample sample_squashed(const GaussianParams& p, const Tensor& noise) {
    Tensor std = exp(p.log_std);
    Tensor u = add(p.mean, mul(std, noise));
    PolicySample s;
    s.action = tanh(u);
    s.log_prob = squashed_log_prob(p.mean, p.log_std, u);
    return s;
}

// Policy network: encoder over observations plus a two-stage head emitting
// (mean, raw log_std) per action dimension.
class Actor {
public:
    Actor() = default;

    Actor(const EncoderConfig& cfg, std::int64_t action_dim, Rng& rng)
        : encoder_(cfg, rng), head_(cfg, 2 * action_dim, rng), action_dim_(action_dim) {}

    GaussianParams forward(const Tensor& obs_norm, std::vector<Tensor>* features = nullptr) const {
        Tensor h = encoder_.forward(obs_norm, features);
        Tensor p = head_.forward(h, features);
        GaussianParams g;
        g.mean = slice_lastaxis(p, 0, action_dim_);
        Tensor raw = slice_lastaxis(p, action_dim_, action_dim_);
        g.log_std = offset(scale(tanh(raw), 0.5 * (kLogStdHigh - kLogStdLow)),
                           kLogStdLow + 0.5 * (kLogStdHigh - kLogStdLow));
        return g;
    }

    Tensor deterministic_action(const Tensor& obs_norm) const { return tanh(forward(obs_norm).mean); }

    void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
        encoder_.collect_params(prefix + "/enc", out);
        head_.collect_params(prefix + "/head", out);
    }

    std::int64_t action_dim() const { return action_dim_; }
    Encoder& encoder() { return encoder_; }
    const Encoder& encoder() const { return encoder_; }
    OutputHead& head() { return head_; }

private:
    Encoder encoder_;
    OutputHead head_;
    std::int64_t action_dim_ = 0;
};

struct CriticOutput {
    Tensor probs;  // [B x n_atom] (empty in mse mode)
    Tensor q;      // [B x 1]
};

// Q network over [observation; action]. Default emits a categorical return
// distribution whose expectation is the Q-value; in mse mode the head emits a
// scalar Q directly through the same two-stage map.
class Critic {
public:
    Critic() = default;

    Critic(const EncoderConfig& cfg, const std::vector<double>& atoms, bool mse_mode, Rng& rng)
        : encoder_(cfg, rng),
          head_(cfg, mse_mode ? 1 : static_cast<std::int64_t>(atoms.size()), rng),
          atoms_(Tensor::from({static_cast<std::int64_t>(atoms.size()), 1}, atoms)),
          mse_mode_(mse_mode) {}

    CriticOutput forward(const Tensor& obs_action_norm, std::vector<Tensor>* features = nullptr) const {
        Tensor h = encoder_.forward(obs_action_norm, features);
        Tensor z = head_.forward(h, features);
        CriticOutput out;
        if (mse_mode_) {
            out.q = z;
        } else {
            out.probs = softmax_lastaxis(z);
            out.q = matmul(out.probs, atoms_);
        }
        return out;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
        encoder_.collect_params(prefix + "/enc", out);
        head_.collect_params(prefix + "/head", out);
    }

    bool mse_mode() const { return mse_mode_; }
    Encoder& encoder() { return encoder_; }
    const Encoder& encoder() const { return encoder_; }
    OutputHead& head() { return head_; }

private:
    Encoder encoder_;
    OutputHead head_;
    Tensor atoms_;
    bool mse_mode_ = false;
};

}  // namespace hypersac

#endif  // HYPERSAC_NETWORK_HPP_

#ifndef HYPERSAC_HYPERSPHERE_HPP_
#define HYPERSAC_HYPERSPHERE_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hypersac/common.hpp"
#include "hypersac/tensor.hpp"

namespace hypersac {

constexpr double kL2Eps = 1e-8;

// Learnable elementwise gain with decoupled initialization. The stored vector
// starts at s_scale but the forward multiplier is stored * (s_init / s_scale),
// so the layer behaves as if initialized to s_init while the stored parameter
// keeps magnitude s_scale under the global learning rate.
class Scaler {
public:
    Scaler() = default;

    Scaler(std::int64_t dim, double s_init, double s_scale)
        : stored_(Tensor::param({dim}, std::vector<double>(static_cast<std::size_t>(dim), s_scale))),
          forward_mult_(s_init / s_scale),
          s_init_(s_init),
          s_scale_(s_scale) {}

    Tensor forward(const Tensor& x) const {
        if (x.rank() == 2 && x.cols() != stored_.numel())
            throw UsageError("Scaler::forward: input " + shape_str(x.shape()) + " vs gain dim " +
                             std::to_string(stored_.numel()));
        return mul(x, scale(stored_, forward_mult_));
    }

    // The effective gain as a graph tensor (stored * s_init / s_scale).
    Tensor effective() const { return scale(stored_, forward_mult_); }

    Tensor& stored() { return stored_; }
    const Tensor& stored() const { return stored_; }
    double s_init() const { return s_init_; }
    double s_scale() const { return s_scale_; }

private:
    Tensor stored_;
    double forward_mult_ = 1.0;
    double s_init_ = 1.0;
    double s_scale_ = 1.0;
};

// Normalizes each row of a weight matrix to unit norm, in place. Applied at
// initialization and again after every optimizer step.
inline void project_weights(Tensor& w) {
    const std::int64_t out = w.rows(), in = w.cols();
    auto& v = w.mutable_value();
    for (std::int64_t r = 0; r < out; ++r) {
        double ss = 0.0;
        double* row = v.data() + r * in;
        for (std::int64_t j = 0; j < in; ++j) ss += row[j] * row[j];
        if (ss < 1e-24)
            throw NumericError("project_weights: row " + std::to_string(r) + " has near-zero norm");
        const double inv = 1.0 / std::sqrt(ss);
        for (std::int64_t j = 0; j < in; ++j) row[j] *= inv;
    }
}

namespace detail {

// Modified Gram-Schmidt over `count` vectors of length `len` with stride
// access mapped by `at`. Deterministic for a fixed input matrix.
template <typename At>
void gram_schmidt(std::int64_t count, std::int64_t len, At at) {
    for (std::int64_t i = 0; i < count; ++i) {
        for (std::int64_t k = 0; k < i; ++k) {
            double dot = 0.0;
            for (std::int64_t j = 0; j < len; ++j) dot += at(i, j) * at(k, j);
            for (std::int64_t j = 0; j < len; ++j) at(i, j) -= dot * at(k, j);
        }
        double ss = 0.0;
        for (std::int64_t j = 0; j < len; ++j) ss += at(i, j) * at(i, j);
        const double inv = 1.0 / std::sqrt(ss);
        for (std::int64_t j = 0; j < len; ++j) at(i, j) *= inv;
    }
}

}  // namespace detail

// Orthogonal initialization: rows form an orthonormal set when out <= in;
// otherwise columns are orthonormalized and rows then projected to unit norm.
inline Tensor init_orthonormal(std::int64_t out, std::int64_t in, Rng& rng) {
    std::vector<double> data(static_cast<std::size_t>(out * in));
    for (auto& v : data) v = rng.normal();
    if (out <= in) {
        detail::gram_schmidt(out, in, [&](std::int64_t i, std::int64_t j) -> double& {
            return data[static_cast<std::size_t>(i * in + j)];
        });
    } else {
        detail::gram_schmidt(in, out, [&](std::int64_t i, std::int64_t j) -> double& {
            return data[static_cast<std::size_t>(j * in + i)];
        });
    }
    Tensor w = Tensor::param({out, in}, std::move(data));
    project_weights(w);
    return w;
}

// Bias-free linear layer with unit-norm weight rows and a decoupled output
// gain. With renormalize the result is projected back to the unit sphere.
class HypersphereLinear {
public:
    HypersphereLinear() = default;

    HypersphereLinear(std::int64_t in, std::int64_t out, double s_init, double s_scale, Rng& rng)
        : w_(init_orthonormal(out, in, rng)), scaler_(out, s_init, s_scale) {}

    Tensor forward(const Tensor& h, bool renormalize) const {
        Tensor y = scaler_.forward(linear(h, w_));
        return renormalize ? l2_normalize_lastaxis(y, kL2Eps) : y;
    }

    Tensor& weight() { return w_; }
    const Tensor& weight() const { return w_; }
    Scaler& scaler() { return scaler_; }
    const Scaler& scaler() const { return scaler_; }

private:
    Tensor w_;
    Scaler scaler_;
};

// l2norm((1 - alpha) * h + alpha * h_tilde): the learnable-interpolation
// step. A first-order retraction of the Riemannian step toward h_tilde; the
// inner-product term of the exact tangent projection is dropped.
inline Tensor lerp_mix(const Tensor& h, const Tensor& h_tilde, const Tensor& alpha) {
    Tensor one_minus = sub(Tensor::full(alpha.shape(), 1.0), alpha);
    return l2_normalize_lastaxis(add(mul(h, one_minus), mul(h_tilde, alpha)), kL2Eps);
}

// One encoder block: inverted-bottleneck MLP re-normalized to the sphere,
// then a learnable interpolation between input and transform, normalized
// again. For unit-norm input the output is unit-norm by construction.
class LerpBlock {
public:
    LerpBlock() = default;

    LerpBlock(std::int64_t d_h, double mlp_s_init, double mlp_s_scale, double alpha_init, double alpha_scale,
              Rng& rng)
        : mlp_in_(d_h, 4 * d_h, mlp_s_init, mlp_s_scale, rng),
          mlp_out_(init_orthonormal(d_h, 4 * d_h, rng)),
          alpha_(d_h, alpha_init, alpha_scale) {}

    Tensor forward(const Tensor& h) const {
        Tensor t = relu(mlp_in_.forward(h, /*renormalize=*/false));
        Tensor transformed = l2_normalize_lastaxis(linear(t, mlp_out_), kL2Eps);
        return lerp_mix(h, transformed, alpha_.effective());
    }

    HypersphereLinear& mlp_in() { return mlp_in_; }
    const HypersphereLinear& mlp_in() const { return mlp_in_; }
    Tensor& mlp_out() { return mlp_out_; }
    const Tensor& mlp_out() const { return mlp_out_; }
    Scaler& alpha() { return alpha_; }
    const Scaler& alpha() const { return alpha_; }

private:
    HypersphereLinear mlp_in_;
    Tensor mlp_out_;
    Scaler alpha_;
};

// Appends a positive constant coordinate and projects onto the unit sphere,
// so inputs of different magnitude stay distinguishable after normalization.
inline Tensor shift_embed(const Tensor& x, double c_shift) {
    if (c_shift <= 0.0)
        throw ConfigError("shift_embed: c_shift must be > 0, got " + std::to_string(c_shift));
    return l2_normalize_lastaxis(append_const_lastaxis(x, c_shift), kL2Eps);
}

inline std::vector<double> shift_embed(const std::vector<double>& x, double c_shift) {
    Tensor t = Tensor::from({1, static_cast<std::int64_t>(x.size())}, x);
    return shift_embed(t, c_shift).value();
}

}  // namespace hypersac

#endif  // HYPERSAC_HYPERSPHERE_HPP_

#ifndef HYPERSAC_DISTRIBUTIONAL_HPP_
#define HYPERSAC_DISTRIBUTIONAL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hypersac/common.hpp"
#include "hypersac/tensor.hpp"

namespace hypersac {

constexpr double kLogTiny = 1e-12;

// Uniformly spaced return support delta_i = G_min + (i-1) (G_max-G_min)/(n-1).
struct ReturnSupport {
    double g_min = -5.0;
    double g_max = 5.0;
    std::int64_t n_atom = 101;
    std::vector<double> atoms;

    double spacing() const { return (g_max - g_min) / static_cast<double>(n_atom - 1); }
};

inline ReturnSupport make_atoms(double g_min, double g_max, std::int64_t n_atom) {
    if (g_max <= g_min)
        throw ConfigError("make_atoms: G_max must exceed G_min, got [" + std::to_string(g_min) + ", " +
                          std::to_string(g_max) + "]");
    if (n_atom < 2) throw ConfigError("make_atoms: need at least 2 atoms, got " + std::to_string(n_atom));
    ReturnSupport s;
    s.g_min = g_min;
    s.g_max = g_max;
    s.n_atom = n_atom;
    s.atoms.resize(static_cast<std::size_t>(n_atom));
    const double step = (g_max - g_min) / static_cast<double>(n_atom - 1);
    for (std::int64_t i = 0; i < n_atom; ++i) s.atoms[static_cast<std::size_t>(i)] = g_min + static_cast<double>(i) * step;
    s.atoms.front() = g_min;
    s.atoms.back() = g_max;
    return s;
}

// Projects a distribution whose mass sits at `target_values` (one value per
// source atom, each carrying source_probs mass) back onto the support. Values
// are clamped to [G_min, G_max] and mass is split linearly between the two
// bracketing atoms. Total mass is preserved exactly.
inline std::vector<double> categorical_project(const ReturnSupport& s, const std::vector<double>& target_values,
                                               const std::vector<double>& source_probs) {
    if (target_values.size() != source_probs.size())
        throw UsageError("categorical_project: values/probs size mismatch");
    std::vector<double> out(static_cast<std::size_t>(s.n_atom), 0.0);
    const double inv_step = static_cast<double>(s.n_atom - 1) / (s.g_max - s.g_min);
    for (std::size_t i = 0; i < target_values.size(); ++i) {
        const double p = source_probs[i];
        if (p == 0.0) continue;
        const double tz = std::clamp(target_values[i], s.g_min, s.g_max);
        double b = (tz - s.g_min) * inv_step;
        // Snap to the grid so values sitting on an atom project one-hot even
        // when the coordinate carries float rounding noise.
        const double nearest = std::round(b);
        if (std::abs(b - nearest) < 1e-9) b = nearest;
        const auto lo = static_cast<std::int64_t>(std::floor(b));
        const std::int64_t hi = std::min<std::int64_t>(lo + 1, s.n_atom - 1);
        const double frac = b - static_cast<double>(lo);
        out[static_cast<std::size_t>(lo)] += p * (1.0 - frac);
        out[static_cast<std::size_t>(hi)] += p * frac;
    }
    return out;
}

// Cross-entropy -sum_i target_i log(pred_i + tiny), averaged over rows.
// Targets are plain values; gradients flow to the predictions only.
inline Tensor kl_critic_loss(const Tensor& pred_probs, const Tensor& target_probs) {
    if (pred_probs.shape() != target_probs.shape())
        throw DimensionError("kl_critic_loss: shape mismatch " + shape_str(pred_probs.shape()) + " vs " +
                             shape_str(target_probs.shape()));
    Tensor target = target_probs.detach();
    Tensor per_row = neg(sum_lastaxis(mul(target, log(offset(pred_probs, kLogTiny)))));
    return mean_all(per_row);
}

}  // namespace hypersac

#endif  // HYPERSAC_DISTRIBUTIONAL_HPP_

#ifndef HYPERSAC_NORMALIZERS_HPP_
#define HYPERSAC_NORMALIZERS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hypersac/common.hpp"

namespace hypersac {

// Streaming per-dimension mean/variance:
//   mu_t    = mu_{t-1} + delta_t / t
//   var_t   = var_{t-1} + (delta_t^2 - var_{t-1}) / t,   delta_t = o_t - mu_{t-1}
// Seeded at mu = 0, var = 0, count = 0; the first update sets the mean to the
// first sample exactly. Note this recursion is not the unbiased sample
// variance; it is used verbatim.
class RunningStat {
public:
    RunningStat() = default;
    explicit RunningStat(std::size_t dim) : mean_(dim, 0.0), var_(dim, 0.0) {}

    void update(const std::vector<double>& o) {
        if (o.size() != mean_.size())
            throw UsageError("RunningStat::update: dimension " + std::to_string(o.size()) + " != " +
                             std::to_string(mean_.size()));
        ++count_;
        const double inv = 1.0 / static_cast<double>(count_);
        for (std::size_t i = 0; i < o.size(); ++i) {
            const double delta = o[i] - mean_[i];
            mean_[i] += delta * inv;
            var_[i] += (delta * delta - var_[i]) * inv;
        }
    }

    std::vector<double> apply(const std::vector<double>& o, double eps = 1e-8) const {
        if (count_ == 0) throw UsageError("RunningStat::apply: no samples observed yet");
        if (o.size() != mean_.size())
            throw UsageError("RunningStat::apply: dimension " + std::to_string(o.size()) + " != " +
                             std::to_string(mean_.size()));
        std::vector<double> out(o.size());
        for (std::size_t i = 0; i < o.size(); ++i) out[i] = (o[i] - mean_[i]) / std::sqrt(var_[i] + eps);
        return out;
    }

    std::size_t dim() const { return mean_.size(); }
    std::uint64_t count() const { return count_; }
    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& var() const { return var_; }

    void restore(std::vector<double> mean, std::vector<double> var, std::uint64_t count) {
        mean_ = std::move(mean);
        var_ = std::move(var);
        count_ = count;
    }

private:
    std::vector<double> mean_;
    std::vector<double> var_;
    std::uint64_t count_ = 0;
};

// Scales rewards by max(sqrt(var(G) + eps), G_running_max / G_support_max),
// where G is the running discounted return, reset to zero at episode starts.
// The mean is never subtracted: scaling preserves the sign of every reward.
class RewardScaler {
public:
    RewardScaler() : RewardScaler(0.99, 5.0) {}

    RewardScaler(double gamma, double support_max, double eps = 1e-8, bool bounding = true)
        : g_stat_(1), gamma_(gamma), support_max_(support_max), eps_(eps), bounding_(bounding) {
        if (support_max <= 0.0)
            throw ConfigError("RewardScaler: G_support_max must be > 0, got " + std::to_string(support_max));
        if (gamma < 0.0 || gamma >= 1.0)
            throw ConfigError("RewardScaler: gamma must be in [0, 1), got " + std::to_string(gamma));
    }

    // Returns the scaled reward and advances all running statistics.
    double step(double reward, bool episode_start) {
        if (episode_start) g_ = 0.0;
        g_ = gamma_ * g_ + reward;
        g_stat_.update({g_});
        running_max_ = std::max(running_max_, g_);
        return reward / denominator();
    }

    double denominator() const {
        const double sd = std::sqrt(g_stat_.var()[0] + eps_);
        return bounding_ ? std::max(sd, running_max_ / support_max_) : sd;
    }

    // True when the running-maximum branch is the active denominator.
    bool bounding_active() const {
        return running_max_ / support_max_ >= std::sqrt(g_stat_.var()[0] + eps_);
    }

    double discounted_return() const { return g_; }
    double running_max() const { return running_max_; }
    double gamma() const { return gamma_; }
    double support_max() const { return support_max_; }
    const RunningStat& stat() const { return g_stat_; }

    void restore(double g, double running_max, std::vector<double> mean, std::vector<double> var,
                 std::uint64_t count) {
        g_ = g;
        running_max_ = running_max;
        g_stat_.restore(std::move(mean), std::move(var), count);
    }

private:
    RunningStat g_stat_;
    double g_ = 0.0;
    double running_max_ = 0.0;
    double gamma_;
    double support_max_;
    double eps_;
    bool bounding_ = true;
};

}  // namespace hypersac

#endif  // HYPERSAC_NORMALIZERS_HPP_

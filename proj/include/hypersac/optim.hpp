#ifndef HYPERSAC_OPTIM_HPP_
#define HYPERSAC_OPTIM_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hypersac/common.hpp"
#include "hypersac/network.hpp"
#include "hypersac/tensor.hpp"

namespace hypersac {

// Adam with bias correction, no weight decay. Moments are kept in ambient
// coordinates; constrained matrices are re-projected by the caller after the
// step, with no correction applied to the moments.
class Adam {
public:
    Adam() = default;
    Adam(double beta1, double beta2, double eps = 1e-8) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<ParamRef>& params, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (auto& p : params) {
            if (!p.tensor.has_grad()) continue;
            auto& st = states_[p.name];
            const auto& g = p.tensor.grad();
            auto& v = p.tensor.mutable_value();
            if (st.m.size() != g.size()) {
                st.m.assign(g.size(), 0.0);
                st.v.assign(g.size(), 0.0);
            }
            for (std::size_t i = 0; i < g.size(); ++i) {
                st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g[i];
                st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g[i] * g[i];
                const double mhat = st.m[i] / bc1;
                const double vhat = st.v[i] / bc2;
                v[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    struct State {
        std::vector<double> m, v;
    };

    std::uint64_t steps() const { return t_; }
    std::unordered_map<std::string, State>& states() { return states_; }
    const std::unordered_map<std::string, State>& states() const { return states_; }
    void restore_steps(std::uint64_t t) { t_ = t; }

private:
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::uint64_t t_ = 0;
    std::unordered_map<std::string, State> states_;
};

// Linear interpolation from lr_init at step 0 to lr_final at total_steps.
inline double lr_schedule(std::uint64_t step, std::uint64_t total_steps, double lr_init, double lr_final) {
    if (step > total_steps) throw UsageError("lr_schedule: step beyond total_steps");
    if (total_steps == 0) return lr_init;
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return lr_init + (lr_final - lr_init) * frac;
}

}  // namespace hypersac

#endif  // HYPERSAC_OPTIM_HPP_

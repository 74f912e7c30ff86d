#ifndef HYPERSAC_ENVS_HPP_
#define HYPERSAC_ENVS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hypersac/common.hpp"

namespace hypersac {

struct StepResult {
    std::vector<double> obs;
    double reward = 0.0;
    bool terminated = false;  // failure/goal; no bootstrap
    bool truncated = false;   // time limit; bootstrap continues
};

struct EnvDescriptor {
    std::string name;
    std::int64_t obs_dim = 0;
    std::int64_t action_dim = 0;
    double action_scale = 1.0;  // policy actions in (-1,1) are multiplied by this
    bool has_failure_termination = false;
    std::int64_t max_episode_steps = 0;
    double default_gamma = 0.99;
};

class Env {
public:
    virtual ~Env() = default;
    virtual const EnvDescriptor& descriptor() const = 0;
    virtual std::vector<double> reset(std::uint64_t seed) = 0;
    // `action` is the raw policy output in [-1, 1]^A; scaling is internal.
    virtual StepResult step(const std::vector<double>& action) = 0;
    virtual std::vector<double> get_state() const = 0;
    virtual void set_state(const std::vector<double>& state) = 0;
};

// Torque-limited pendulum swing-up. theta = 0 is upright (unstable
// equilibrium). Dynamics integrated with semi-implicit Euler:
//   theta_dd = (3 g / 2 l) sin(theta) + 3 u / (m l^2)
// Reward penalizes angle error, velocity, and torque; episodes truncate at
// 200 steps and never terminate.
class PendulumEnv : public Env {
public:
    explicit PendulumEnv(double dt = 0.05) : dt_(dt) {
        desc_.name = "pendulum";
        desc_.obs_dim = 3;
        desc_.action_dim = 1;
        desc_.action_scale = kMaxTorque;
        desc_.has_failure_termination = false;
        desc_.max_episode_steps = 200;
        desc_.default_gamma = 0.99;
    }

    const EnvDescriptor& descriptor() const override { return desc_; }

    std::vector<double> reset(std::uint64_t seed) override {
        Rng rng(seed);
        theta_ = rng.uniform(-kPi, kPi);
        theta_dot_ = rng.uniform(-1.0, 1.0);
        steps_ = 0;
        return observe();
    }

    StepResult step(const std::vector<double>& action) override {
        const double u = std::clamp(action.at(0), -1.0, 1.0) * kMaxTorque;
        const double err = angle_error();
        const double reward = -(err * err + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u);

        const double accel = (3.0 * kGravity / (2.0 * kLength)) * std::sin(theta_) +
                             3.0 * u / (kMass * kLength * kLength);
        theta_dot_ += accel * dt_;
        theta_dot_ = std::clamp(theta_dot_, -kMaxSpeed, kMaxSpeed);
        theta_ += theta_dot_ * dt_;
        ++steps_;

        StepResult r;
        r.obs = observe();
        r.reward = reward;
        r.truncated = steps_ >= desc_.max_episode_steps;
        return r;
    }

    std::vector<double> get_state() const override {
        return {theta_, theta_dot_, static_cast<double>(steps_)};
    }
    void set_state(const std::vector<double>& s) override {
        theta_ = s.at(0);
        theta_dot_ = s.at(1);
        steps_ = static_cast<std::int64_t>(s.at(2));
    }

    // Total mechanical energy of the unforced rod pendulum (moment of inertia
    // m l^2 / 3 about the pivot, center of mass at l/2).
    double energy() const {
        const double inertia = kMass * kLength * kLength / 3.0;
        return 0.5 * inertia * theta_dot_ * theta_dot_ + 0.5 * kMass * kGravity * kLength * std::cos(theta_);
    }

    double theta() const { return theta_; }
    double theta_dot() const { return theta_dot_; }

private:
    static constexpr double kPi = 3.14159265358979323846;
    static constexpr double kGravity = 10.0;
    static constexpr double kLength = 1.0;
    static constexpr double kMass = 1.0;
    static constexpr double kMaxTorque = 2.0;
    static constexpr double kMaxSpeed = 8.0;

    double angle_error() const {
        double a = std::fmod(theta_ + kPi, 2.0 * kPi);
        if (a < 0) a += 2.0 * kPi;
        return a - kPi;
    }

    std::vector<double> observe() const { return {std::cos(theta_), std::sin(theta_), theta_dot_}; }

    EnvDescriptor desc_;
    double dt_;
    double theta_ = 0.0;
    double theta_dot_ = 0.0;
    std::int64_t steps_ = 0;
};

// 2-D double integrator driven toward the origin. Terminates on reaching the
// goal (distance < 0.05), truncates at 100 steps.
class PointMassEnv : public Env {
public:
    PointMassEnv() {
        desc_.name = "pointmass";
        desc_.obs_dim = 4;
        desc_.action_dim = 2;
        desc_.action_scale = 1.0;
        desc_.has_failure_termination = true;
        desc_.max_episode_steps = 100;
        desc_.default_gamma = 0.99;
    }

    const EnvDescriptor& descriptor() const override { return desc_; }

    std::vector<double> reset(std::uint64_t seed) override {
        Rng rng(seed);
        px_ = rng.uniform(-1.0, 1.0);
        py_ = rng.uniform(-1.0, 1.0);
        vx_ = vy_ = 0.0;
        steps_ = 0;
        return observe();
    }

    StepResult step(const std::vector<double>& action) override {
        const double ax = std::clamp(action.at(0), -1.0, 1.0);
        const double ay = std::clamp(action.at(1), -1.0, 1.0);
        vx_ += ax * kDt;
        vy_ += ay * kDt;
        px_ += vx_ * kDt;
        py_ += vy_ * kDt;
        ++steps_;

        StepResult r;
        r.obs = observe();
        const double dist = std::sqrt(px_ * px_ + py_ * py_);
        r.reward = -dist;
        r.terminated = dist < kGoalRadius;
        r.truncated = !r.terminated && steps_ >= desc_.max_episode_steps;
        return r;
    }

    std::vector<double> get_state() const override {
        return {px_, py_, vx_, vy_, static_cast<double>(steps_)};
    }
    void set_state(const std::vector<double>& s) override {
        px_ = s.at(0);
        py_ = s.at(1);
        vx_ = s.at(2);
        vy_ = s.at(3);
        steps_ = static_cast<std::int64_t>(s.at(4));
    }

private:
    static constexpr double kDt = 0.1;
    static constexpr double kGoalRadius = 0.05;

    std::vector<double> observe() const { return {px_, py_, vx_, vy_}; }

    EnvDescriptor desc_;
    double px_ = 0.0, py_ = 0.0, vx_ = 0.0, vy_ = 0.0;
    std::int64_t steps_ = 0;
};

inline std::unique_ptr<Env> make_env(const std::string& name) {
    if (name == "pendulum") return std::make_unique<PendulumEnv>();
    if (name == "pointmass") return std::make_unique<PointMassEnv>();
    throw ConfigError("make_env: unknown environment '" + name + "'");
}

}  // namespace hypersac

#endif  // HYPERSAC_ENVS_HPP_

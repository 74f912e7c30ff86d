#ifndef HYPERSAC_REPLAY_HPP_
#define HYPERSAC_REPLAY_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "hypersac/common.hpp"

namespace hypersac {

struct Transition {
    std::vector<double> obs;
    std::vector<double> action;
    double scaled_reward = 0.0;
    std::vector<double> next_obs;
    bool terminated = false;
    bool truncated = false;
};

// Uniform-sampling ring buffer over flat float64 storage.
class ReplayBuffer {
public:
    ReplayBuffer() = default;

    ReplayBuffer(std::int64_t capacity, std::int64_t obs_dim, std::int64_t act_dim)
        : capacity_(capacity), obs_dim_(obs_dim), act_dim_(act_dim) {
        if (capacity < 1) throw ConfigError("ReplayBuffer: capacity must be >= 1");
        obs_.resize(static_cast<std::size_t>(capacity * obs_dim));
        action_.resize(static_cast<std::size_t>(capacity * act_dim));
        reward_.resize(static_cast<std::size_t>(capacity));
        next_obs_.resize(static_cast<std::size_t>(capacity * obs_dim));
        terminated_.resize(static_cast<std::size_t>(capacity));
        truncated_.resize(static_cast<std::size_t>(capacity));
    }

    void push(const Transition& t) {
        if (static_cast<std::int64_t>(t.obs.size()) != obs_dim_ ||
            static_cast<std::int64_t>(t.action.size()) != act_dim_)
            throw UsageError("ReplayBuffer::push: transition dimensions do not match the descriptor");
        const std::int64_t i = head_;
        std::copy(t.obs.begin(), t.obs.end(), obs_.begin() + i * obs_dim_);
        std::copy(t.action.begin(), t.action.end(), action_.begin() + i * act_dim_);
        reward_[static_cast<std::size_t>(i)] = t.scaled_reward;
        std::copy(t.next_obs.begin(), t.next_obs.end(), next_obs_.begin() + i * obs_dim_);
        terminated_[static_cast<std::size_t>(i)] = t.terminated ? 1.0 : 0.0;
        truncated_[static_cast<std::size_t>(i)] = t.truncated ? 1.0 : 0.0;
        head_ = (head_ + 1) % capacity_;
        size_ = std::min(size_ + 1, capacity_);
    }

    // Uniform indices over the filled region only.
    std::vector<std::int64_t> sample_indices(std::int64_t batch, Rng& rng) const {
        if (size_ == 0) throw UsageError("ReplayBuffer::sample_indices: buffer is empty");
        std::vector<std::int64_t> idx(static_cast<std::size_t>(batch));
        for (auto& v : idx) v = static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(size_));
        return idx;
    }

    void gather(const std::vector<std::int64_t>& idx, std::vector<double>& obs, std::vector<double>& action,
                std::vector<double>& reward, std::vector<double>& next_obs, std::vector<double>& terminated) const {
        const auto b = static_cast<std::int64_t>(idx.size());
        obs.resize(static_cast<std::size_t>(b * obs_dim_));
        action.resize(static_cast<std::size_t>(b * act_dim_));
        reward.resize(static_cast<std::size_t>(b));
        next_obs.resize(static_cast<std::size_t>(b * obs_dim_));
        terminated.resize(static_cast<std::size_t>(b));
        for (std::int64_t r = 0; r < b; ++r) {
            const std::int64_t i = idx[static_cast<std::size_t>(r)];
            std::copy_n(obs_.begin() + i * obs_dim_, obs_dim_, obs.begin() + r * obs_dim_);
            std::copy_n(action_.begin() + i * act_dim_, act_dim_, action.begin() + r * act_dim_);
            reward[static_cast<std::size_t>(r)] = reward_[static_cast<std::size_t>(i)];
            std::copy_n(next_obs_.begin() + i * obs_dim_, obs_dim_, next_obs.begin() + r * obs_dim_);
            terminated[static_cast<std::size_t>(r)] = terminated_[static_cast<std::size_t>(i)];
        }
    }

    std::int64_t size() const { return size_; }
    std::int64_t capacity() const { return capacity_; }
    std::int64_t obs_dim() const { return obs_dim_; }
    std::int64_t act_dim() const { return act_dim_; }
    std::int64_t head() const { return head_; }
    double stored_reward(std::int64_t i) const { return reward_[static_cast<std::size_t>(i)]; }

    // Raw storage access for checkpointing.
    std::vector<double>& raw_obs() { return obs_; }
    std::vector<double>& raw_action() { return action_; }
    std::vector<double>& raw_reward() { return reward_; }
    std::vector<double>& raw_next_obs() { return next_obs_; }
    std::vector<double>& raw_terminated() { return terminated_; }
    std::vector<double>& raw_truncated() { return truncated_; }
    void restore_counters(std::int64_t head, std::int64_t size) {
        head_ = head;
        size_ = size;
    }

private:
    std::int64_t capacity_ = 0;
    std::int64_t obs_dim_ = 0;
    std::int64_t act_dim_ = 0;
    std::int64_t head_ = 0;
    std::int64_t size_ = 0;
    std::vector<double> obs_, action_, reward_, next_obs_, terminated_, truncated_;
};

}  // namespace hypersac

#endif  // HYPERSAC_REPLAY_HPP_

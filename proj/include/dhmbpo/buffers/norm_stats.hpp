#pragma once

#include <span>
#include <string>
#include <vector>

#include "dhmbpo/buffers/buffer.hpp"

namespace dhmbpo::ad {
class TensorArchive;
}

namespace dhmbpo::buffers {

inline constexpr double kStdFloor = 1e-6;

// Per-dimension streaming mean and sample variance (Chan et al. merge).
class RunningMoments {
public:
    RunningMoments() = default;
    explicit RunningMoments(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

    // rows is row-major [n, dim].
    void update(std::span<const double> rows);

    std::size_t dim() const { return mean_.size(); }
    double count() const { return count_; }
    const std::vector<double>& mean() const { return mean_; }
    // Sample standard deviation (divisor n - 1), floored at kStdFloor.
    std::vector<double> stddev() const;

    void save(ad::TensorArchive& archive, const std::string& prefix) const;
    void load(const ad::TensorArchive& archive, const std::string& prefix);

private:
    double count_ = 0;
    std::vector<double> mean_, m2_;
};

// Statistics of states, displacements s' - s and rewards. Actions are never normalized.
class NormStats {
public:
    NormStats() = default;
    // Identity normalization until the first update.
    explicit NormStats(std::size_t state_dim)
        : state_(state_dim), delta_(state_dim), reward_(1), sm_(state_dim, 0.0), ss_(state_dim, 1.0),
          dm_(state_dim, 0.0), ds_(state_dim, 1.0) {}

    void update(const Batch& batch);
    void update(const Transition& t);

    std::size_t state_dim() const { return state_.dim(); }
    double count() const { return state_.count(); }

    // Cached moments; refreshed by update.
    const std::vector<double>& state_mean() const { return sm_; }
    const std::vector<double>& state_std() const { return ss_; }
    const std::vector<double>& delta_mean() const { return dm_; }
    const std::vector<double>& delta_std() const { return ds_; }
    double reward_mean() const { return rm_; }
    double reward_std() const { return rs_; }

    // Sets the cached moments directly (tests, synthetic systems).
    void set(std::vector<double> state_mean, std::vector<double> state_std, std::vector<double> delta_mean,
             std::vector<double> delta_std, double reward_mean, double reward_std);

    void normalize_state(std::span<const double> s, std::span<double> out) const;
    void denormalize_state(std::span<const double> s, std::span<double> out) const;
    void normalize_delta(std::span<const double> d, std::span<double> out) const;
    void denormalize_delta(std::span<const double> d, std::span<double> out) const;
    double normalize_reward(double r) const { return (r - rm_) / rs_; }
    double denormalize_reward(double r) const { return rm_ + rs_ * r; }

    // Closed form of denormalize -> add displacement -> renormalize:
    // s' = s + (mu_d + sigma_d * d) / sigma_s, all in normalized state space.
    double normalized_successor(std::size_t dim, double s_bar, double delta_bar) const {
        return s_bar + (dm_[dim] + ds_[dim] * delta_bar) / ss_[dim];
    }
    void normalized_successor(std::span<const double> s_bar, std::span<const double> delta_bar,
                              std::span<double> out) const;

    void save(ad::TensorArchive& archive, const std::string& prefix) const;
    void load(const ad::TensorArchive& archive, const std::string& prefix);

private:
    void refresh();

    RunningMoments state_, delta_, reward_;
    std::vector<double> sm_, ss_, dm_, ds_;
    double rm_ = 0, rs_ = 1;
};

}  // namespace dhmbpo::buffers

#pragma once

#include <cstdint>
#include <vector>

#include "dhmbpo/agent/q_bounds.hpp"
#include "dhmbpo/autodiff/nn.hpp"
#include "dhmbpo/core/rng.hpp"

namespace dhmbpo::agent {

using ad::Scalar;
using ad::Tensor;

struct CriticConfig {
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    std::size_t members = 5;
    std::vector<std::size_t> hidden{512, 512, 512};
    double dropout = 1e-4;
    bool layer_norm = true;
    ad::Activation activation = ad::Activation::silu;
    std::size_t target_subset = 2;  // members in the randomized min
};

struct TargetReport {
    std::vector<std::uint32_t> subset;
    std::size_t clipped_low = 0, clipped_high = 0;
    bool bounds_applied = false;
};

// K online Q-networks with EMA target copies.
class CriticEnsemble {
public:
    CriticEnsemble() = default;
    CriticEnsemble(CriticConfig config, Rng& rng);
    CriticEnsemble(const CriticEnsemble&) = delete;
    CriticEnsemble& operator=(const CriticEnsemble&) = delete;

    const CriticConfig& config() const { return config_; }
    std::size_t members() const { return config_.members; }

    // Online member values [K,B]. Dropout is active when `training`.
    Tensor q_values(const Tensor& states, const Tensor& actions, bool training = false, Rng* rng = nullptr) const;
    // Mean over online members [B], evaluation mode.
    Tensor q_mean(const Tensor& states, const Tensor& actions) const;
    // Target member values [K,B], evaluation mode, never recorded.
    std::vector<double> target_values(const Tensor& states, const Tensor& actions) const;

    // Minimum over a uniformly drawn subset of target members, then clamped
    // to the bounds when they are initialized.
    std::vector<double> target_q(const Tensor& states, const Tensor& actions, Rng& rng, const QBounds& bounds,
                                 TargetReport* report = nullptr) const;

    // phi_bar <- c phi_bar + (1 - c) phi.
    void update_target(double momentum);

    ad::ParameterSet& parameters() { return online_.parameters(); }
    const ad::ParameterSet& parameters() const { return online_.parameters(); }
    ad::ParameterSet& target_parameters() { return target_.parameters(); }
    const ad::ParameterSet& target_parameters() const { return target_.parameters(); }

private:
    CriticConfig config_;
    ad::EnsembleMlp online_, target_;
};

// Randomized ensemble min over `subset` rows of values [K,B], then clamped.
// Shared by the critic ensemble and by independent target checks.
std::vector<double> red_q_min(std::span<const double> values, std::size_t members, std::size_t batch,
                              std::size_t subset, Rng& rng, const QBounds& bounds, TargetReport* report = nullptr);

}  // namespace dhmbpo::agent

#pragma once

#include <span>
#include <string>
#include <vector>

#include "dhmbpo/autodiff/nn.hpp"
#include "dhmbpo/core/rng.hpp"

namespace dhmbpo::agent {

using ad::Scalar;
using ad::Tensor;

struct PolicyConfig {
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    std::vector<std::size_t> hidden{512, 512, 512};
    ad::Activation activation = ad::Activation::silu;
    double log_std_min = -5, log_std_max = 2;
    double pre_squash_limit = 15;  // |u| cap before tanh; keeps actions strictly inside the bounds
};

struct PolicyOutput {
    Tensor actions;    // [B,A], inside the action bounds
    Tensor log_probs;  // [B]
};

// Reparametrized stochastic policy as seen by the model rollouts.
class StochasticPolicy {
public:
    virtual ~StochasticPolicy() = default;
    virtual std::size_t state_dim() const = 0;
    virtual std::size_t action_dim() const = 0;
    virtual PolicyOutput sample(const Tensor& states, Rng& rng) const = 0;
    virtual ad::ParameterSet& parameters() = 0;
    virtual const ad::ParameterSet& parameters() const = 0;
};

// Tanh-squashed diagonal Gaussian: a = c + h tanh(mean + std * eps), where c
// and h are the center and half-range of the action box.
class SquashedGaussianPolicy : public StochasticPolicy {
public:
    SquashedGaussianPolicy() = default;
    SquashedGaussianPolicy(PolicyConfig config, std::vector<double> action_low, std::vector<double> action_high,
                           Rng& rng);

    const PolicyConfig& config() const { return config_; }
    std::size_t state_dim() const override { return config_.state_dim; }
    std::size_t action_dim() const override { return config_.action_dim; }
    const std::vector<double>& action_low() const { return low_; }
    const std::vector<double>& action_high() const { return high_; }

    // Pre-squash mean and clamped log-std, each [B,A].
    std::pair<Tensor, Tensor> distribution(const Tensor& states) const;

    // Reparametrized sample for standard normal noise [B,A] (a constant).
    PolicyOutput sample(const Tensor& states, const Tensor& noise) const;
    PolicyOutput sample(const Tensor& states, Rng& rng) const override;
    // c + h tanh(mean).
    Tensor deterministic(const Tensor& states) const;

    // Gradient-free convenience for B raw states laid out row-major.
    std::vector<double> act(std::span<const double> states, std::size_t n, Rng& rng, bool deterministic) const;

    ad::ParameterSet& parameters() override { return net_.parameters(); }
    const ad::ParameterSet& parameters() const override { return net_.parameters(); }

private:
    Tensor squash(const Tensor& u) const;

    PolicyConfig config_;
    std::vector<double> low_, high_;
    Tensor center_, half_range_;  // [A] constants
    double log_half_range_sum_ = 0;
    ad::Mlp net_;
};

// log N(u; mean, std) - sum log(1 - tanh^2 u) - sum log h, evaluated from the
// pre-squash value; used by tests and by the policy itself.
double squashed_log_density(std::span<const double> u, std::span<const double> mean, std::span<const double> log_std,
                            std::span<const double> half_range);

}  // namespace dhmbpo::agent

#pragma once

#include <array>
#include <optional>
#include <vector>

#include "dhmbpo/agent/policy.hpp"
#include "dhmbpo/rollouts/interfaces.hpp"

namespace dhmbpo::rollouts {

// Scalar linear-quadratic system: s' = a s + b u + noise_std w,
// r = -(s^2 + control_cost u^2).
struct LqSystem {
    double a = 0.9;
    double b = 0.5;
    double noise_std = 0.3;
    double control_cost = 0.1;
    double gamma = 0.9;
};

// Linear-Gaussian policy u = gain s + offset + exp(log_std) eps.
struct LqPolicyParams {
    double gain = -0.6;
    double offset = 0.1;
    double log_std = -1.2;
};

// V(s) = -(p s^2 + q s + v0) for the policy above.
struct LqValue {
    double p = 0, q = 0, v0 = 0;
};

LqValue lq_value(const LqSystem& sys, const LqPolicyParams& pi);
double lq_state_value(const LqValue& v, double s);
double lq_action_value(const LqSystem& sys, const LqValue& v, double s, double u);
// d V(s) / d (gain, offset, log_std), exact.
std::array<double, 3> lq_value_gradient(const LqSystem& sys, const LqPolicyParams& pi, double s);

class LqDynamics : public Dynamics {
public:
    explicit LqDynamics(LqSystem sys) : sys_(sys) {}
    std::size_t state_dim() const override { return 1; }
    ModelStep step(const Tensor& states, const Tensor& actions, Rng& rng) const override;

private:
    LqSystem sys_;
};

class LinearGaussianPolicy;

// beta * Q^pi; the analytic critic of the synthetic system. The frozen form
// fixes the coefficients at construction. The tracking form recomputes them
// from a scalar policy's live parameters and passes gradients into them, so
// the MVE expectation equals V^pi(s) identically in the parameters.
class LqCritic : public ValueFunction {
public:
    LqCritic(const LqSystem& sys, const LqPolicyParams& pi, double beta);
    LqCritic(const LqSystem& sys, const LinearGaussianPolicy& tracked, double beta);
    Tensor q(const Tensor& states, const Tensor& actions) const override;
    std::vector<double> target_q(const Tensor& states, const Tensor& actions, Rng& rng) const override;

private:
    Tensor coefficients() const;  // [3] = (p, q, v0)

    LqSystem sys_;
    LqValue value_;
    double beta_;
    const LinearGaussianPolicy* tracked_ = nullptr;
};

// mean = x K + c, log std = l (state independent); optionally tanh-squashed
// into a box. With S = 2, A = 1 this has four parameters.
class LinearGaussianPolicy : public agent::StochasticPolicy {
public:
    LinearGaussianPolicy(std::size_t state_dim, std::size_t action_dim, std::vector<double> gain,
                         std::vector<double> offset, std::vector<double> log_std,
                         std::optional<std::pair<std::vector<double>, std::vector<double>>> bounds = std::nullopt);
    static LinearGaussianPolicy scalar(const LqPolicyParams& p);
    LqPolicyParams scalar_params() const;

    std::size_t state_dim() const override { return state_dim_; }
    std::size_t action_dim() const override { return action_dim_; }
    agent::PolicyOutput sample(const Tensor& states, Rng& rng) const override;
    agent::PolicyOutput sample(const Tensor& states, const Tensor& noise) const;
    ad::ParameterSet& parameters() override { return params_; }
    const ad::ParameterSet& parameters() const override { return params_; }

private:
    friend class LqCritic;
    std::size_t state_dim_, action_dim_;
    Tensor gain_, offset_, log_std_;
    bool squash_ = false;
    Tensor center_, half_;
    double log_half_sum_ = 0;
    ad::ParameterSet params_;
};

}  // namespace dhmbpo::rollouts

#pragma once

#include <cstdint>
#include <vector>

#include "dhmbpo/agent/critics.hpp"
#include "dhmbpo/agent/q_bounds.hpp"
#include "dhmbpo/autodiff/tensor.hpp"
#include "dhmbpo/core/rng.hpp"
#include "dhmbpo/model/ensemble_model.hpp"

namespace dhmbpo::rollouts {

using ad::Scalar;
using ad::Tensor;

struct ModelStep {
    Tensor next_states;  // [B,S]
    Tensor rewards;      // [B]
    std::vector<std::uint8_t> finite;
};

// One sampled transition per row; differentiable through states and actions
// when recording is active.
class Dynamics {
public:
    virtual ~Dynamics() = default;
    virtual std::size_t state_dim() const = 0;
    virtual ModelStep step(const Tensor& states, const Tensor& actions, Rng& rng) const = 0;
};

// Critic as seen by the estimators: a differentiable actor-path value and a
// gradient-free regression target.
class ValueFunction {
public:
    virtual ~ValueFunction() = default;
    virtual Tensor q(const Tensor& states, const Tensor& actions) const = 0;  // [B]
    virtual std::vector<double> target_q(const Tensor& states, const Tensor& actions, Rng& rng) const = 0;
};

// TS-1 sampling from the learned ensemble.
class ModelDynamics : public Dynamics {
public:
    explicit ModelDynamics(const model::EnsembleGaussianModel& model, double noise_scale = 1.0)
        : model_(model), noise_scale_(noise_scale) {}
    std::size_t state_dim() const override { return model_.state_dim(); }
    ModelStep step(const Tensor& states, const Tensor& actions, Rng& rng) const override;

private:
    const model::EnsembleGaussianModel& model_;
    double noise_scale_;
};

// Mean of the online members on the actor path; randomized min of the target
// members, clamped by the bounds, for targets. Clip counts accumulate.
class CriticValue : public ValueFunction {
public:
    CriticValue(const agent::CriticEnsemble& critics, const agent::QBounds& bounds)
        : critics_(critics), bounds_(bounds) {}
    Tensor q(const Tensor& states, const Tensor& actions) const override;
    std::vector<double> target_q(const Tensor& states, const Tensor& actions, Rng& rng) const override;

    const agent::TargetReport& last_report() const { return last_; }
    std::size_t clipped() const { return clipped_; }
    std::size_t unbounded_calls() const { return unbounded_; }

private:
    const agent::CriticEnsemble& critics_;
    const agent::QBounds& bounds_;
    mutable agent::TargetReport last_;
    mutable std::size_t clipped_ = 0, unbounded_ = 0;
};

}  // namespace dhmbpo::rollouts

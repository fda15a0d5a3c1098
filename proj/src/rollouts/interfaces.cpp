#include "dhmbpo/rollouts/interfaces.hpp"

namespace dhmbpo::rollouts {

ModelStep ModelDynamics::step(const Tensor& states, const Tensor& actions, Rng& rng) const {
    ModelStep out;
    auto s = model_.ts1_step(states, actions, rng, noise_scale_, &out.finite);
    out.next_states = std::move(s.next_states);
    out.rewards = std::move(s.rewards);
    return out;
}

Tensor CriticValue::q(const Tensor& states, const Tensor& actions) const { return critics_.q_mean(states, actions); }

std::vector<double> CriticValue::target_q(const Tensor& states, const Tensor& actions, Rng& rng) const {
    auto values = critics_.target_q(states, actions, rng, bounds_, &last_);
    clipped_ += last_.clipped_low + last_.clipped_high;
    if (!last_.bounds_applied) ++unbounded_;
    return values;
}

}  // namespace dhmbpo::rollouts

#include "dhmbpo/agent/soft_value.hpp"

namespace dhmbpo::agent {

Tensor soft_value(const CriticEnsemble& critics, const SquashedGaussianPolicy& policy, double alpha,
                  const Tensor& states, const Tensor& noise) {
    const auto out = policy.sample(states, noise);
    return critics.q_mean(states, out.actions) - ad::scale(out.log_probs, alpha);
}

}  // namespace dhmbpo::agent

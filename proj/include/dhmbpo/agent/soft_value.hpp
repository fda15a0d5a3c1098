#pragma once

#include "dhmbpo/agent/critics.hpp"
#include "dhmbpo/agent/policy.hpp"

namespace dhmbpo::agent {

// Single-sample soft value Q_mean(s, a) - alpha log pi(a|s), a = pi(s, noise).
// Critic members are averaged and never clipped on this path.
Tensor soft_value(const CriticEnsemble& critics, const SquashedGaussianPolicy& policy, double alpha,
                  const Tensor& states, const Tensor& noise);

}  // namespace dhmbpo::agent

#include "dhmbpo/agent/critics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "dhmbpo/autodiff/tape.hpp"
#include "dhmbpo/core/error.hpp"

namespace dhmbpo::agent {

namespace {
ad::MlpConfig network_config(const CriticConfig& c) {
    ad::MlpConfig mc;
    mc.input_dim = c.state_dim + c.action_dim;
    mc.output_dim = 1;
    mc.hidden = c.hidden;
    mc.activation = c.activation;
    mc.layer_norm = c.layer_norm;
    if (c.dropout > 0) mc.dropout.assign(c.hidden.size(), c.dropout);
    return mc;
}
}  // namespace

CriticEnsemble::CriticEnsemble(CriticConfig config, Rng& rng) : config_(std::move(config)) {
    require(config_.state_dim > 0 && config_.action_dim > 0, "CriticEnsemble: empty input");
    require(config_.members > 0, "CriticEnsemble: need at least one member");
    require(config_.target_subset > 0 && config_.target_subset <= config_.members,
            "CriticEnsemble: target subset must lie in [1, K]");
    const ad::MlpConfig mc = network_config(config_);
    online_ = ad::EnsembleMlp(config_.members, mc, rng);
    // Same shapes; values are overwritten by the copy below.
    Rng scratch(0);
    target_ = ad::EnsembleMlp(config_.members, mc, scratch);
    target_.parameters().copy_from(online_.parameters());
    target_.parameters().set_requires_grad(false);
}

Tensor CriticEnsemble::q_values(const Tensor& states, const Tensor& actions, bool training, Rng* rng) const {
    require(states.rank() == 2 && actions.rank() == 2 && states.dim(0) == actions.dim(0),
            "CriticEnsemble: states/actions batch mismatch");
    const std::size_t B = states.dim(0);
    const Tensor out = online_.forward(ad::concat_last(states, actions), training, rng);
    return ad::reshape(out, {config_.members, B});
}

Tensor CriticEnsemble::q_mean(const Tensor& states, const Tensor& actions) const {
    return ad::mean_leading(q_values(states, actions));
}

std::vector<double> CriticEnsemble::target_values(const Tensor& states, const Tensor& actions) const {
    ad::NoGradScope no_grad;
    const Tensor s = states.detach(), a = actions.detach();
    const Tensor out = target_.forward(ad::concat_last(s, a), false, nullptr);
    return {out.values().begin(), out.values().end()};
}

std::vector<double> CriticEnsemble::target_q(const Tensor& states, const Tensor& actions, Rng& rng,
                                             const QBounds& bounds, TargetReport* report) const {
    const auto values = target_values(states, actions);
    return red_q_min(values, config_.members, states.dim(0), config_.target_subset, rng, bounds, report);
}

void CriticEnsemble::update_target(double momentum) {
    require(momentum >= 0 && momentum <= 1, "CriticEnsemble: momentum outside [0,1]");
    target_.parameters().blend_toward(online_.parameters(), momentum);
}

std::vector<double> red_q_min(std::span<const double> values, std::size_t members, std::size_t batch,
                              std::size_t subset, Rng& rng, const QBounds& bounds, TargetReport* report) {
    require(values.size() == members * batch, "red_q_min: values must be [K,B]");
    require(subset > 0 && subset <= members, "red_q_min: subset outside [1, K]");
    // Partial Fisher-Yates draw of distinct members, shared by the whole batch.
    std::vector<std::uint32_t> order(members);
    std::iota(order.begin(), order.end(), 0u);
    for (std::size_t i = 0; i < subset; ++i) {
        const std::size_t j = i + rng.uniform_index(members - i);
        std::swap(order[i], order[j]);
    }
    order.resize(subset);

    std::vector<double> out(batch, std::numeric_limits<double>::infinity());
    for (std::uint32_t m : order)
        for (std::size_t b = 0; b < batch; ++b) out[b] = std::min(out[b], values[m * batch + b]);

    TargetReport local;
    local.subset = order;
    local.bounds_applied = bounds.initialized();
    if (bounds.initialized())
        for (double& v : out) {
            if (v < bounds.q_low()) ++local.clipped_low;
            if (v > bounds.q_high()) ++local.clipped_high;
            v = bounds.clamp(v);
        }
    if (report) *report = std::move(local);
    return out;
}

}  // namespace dhmbpo::agent

#include "dhmbpo/agent/policy.hpp"

#include <cmath>
#include <numbers>

#include "dhmbpo/autodiff/tape.hpp"
#include "dhmbpo/core/error.hpp"

namespace dhmbpo::agent {

namespace {
const double kHalfLog2Pi = 0.5 * std::log(2 * std::numbers::pi);

double log1m_tanh_sq(double u) {
    // log(1 - tanh^2 u) = 2 (log 2 - u - softplus(-2u))
    const double x = -2 * u;
    const double softplus = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    return 2 * (std::numbers::ln2 - u - softplus);
}
}  // namespace

SquashedGaussianPolicy::SquashedGaussianPolicy(PolicyConfig config, std::vector<double> action_low,
                                               std::vector<double> action_high, Rng& rng)
    : config_(std::move(config)), low_(std::move(action_low)), high_(std::move(action_high)) {
    const std::size_t A = config_.action_dim;
    require(config_.state_dim > 0 && A > 0, "SquashedGaussianPolicy: empty state or action space");
    require(low_.size() == A && high_.size() == A, "SquashedGaussianPolicy: action bounds size");
    require(config_.log_std_min < config_.log_std_max, "SquashedGaussianPolicy: log-std range");
    std::vector<Scalar> center(A), half(A);
    for (std::size_t i = 0; i < A; ++i) {
        require(high_[i] > low_[i], "SquashedGaussianPolicy: empty action interval");
        center[i] = 0.5 * (high_[i] + low_[i]);
        half[i] = 0.5 * (high_[i] - low_[i]);
        log_half_range_sum_ += std::log(half[i]);
    }
    center_ = Tensor::from_values({A}, std::move(center));
    half_range_ = Tensor::from_values({A}, std::move(half));

    ad::MlpConfig mc;
    mc.input_dim = config_.state_dim;
    mc.output_dim = 2 * A;
    mc.hidden = config_.hidden;
    mc.activation = config_.activation;
    net_ = ad::Mlp(mc, rng);
}

std::pair<Tensor, Tensor> SquashedGaussianPolicy::distribution(const Tensor& states) const {
    require(states.rank() == 2 && states.dim(1) == config_.state_dim,
            "policy: states must be [B," + std::to_string(config_.state_dim) + "]");
    const Tensor out = net_.forward(states, false, nullptr);
    const std::size_t A = config_.action_dim;
    return {ad::slice_last(out, 0, A),
            ad::clamp(ad::slice_last(out, A, 2 * A), config_.log_std_min, config_.log_std_max)};
}

Tensor SquashedGaussianPolicy::squash(const Tensor& u) const {
    return ad::add(ad::mul(ad::tanh(u), half_range_), center_);
}

PolicyOutput SquashedGaussianPolicy::sample(const Tensor& states, const Tensor& noise) const {
    const auto [mean, log_std] = distribution(states);
    require(noise.shape() == mean.shape(), "policy: noise must be " + ad::shape_string(mean.shape()));
    const double limit = config_.pre_squash_limit;
    const Tensor u = ad::clamp(mean + ad::exp(log_std) * noise, -limit, limit);

    std::vector<Scalar> half_sq(noise.numel());
    const auto nv = noise.values();
    for (std::size_t i = 0; i < half_sq.size(); ++i) half_sq[i] = -0.5 * nv[i] * nv[i];
    const Tensor gauss = Tensor::from_values(noise.shape(), std::move(half_sq));
    const Tensor per_dim = gauss - log_std - ad::log1m_tanh_sq(u);
    const double A = static_cast<double>(config_.action_dim);
    const Tensor log_probs = ad::sum_last(per_dim) + (-A * kHalfLog2Pi - log_half_range_sum_);
    return {squash(u), log_probs};
}

PolicyOutput SquashedGaussianPolicy::sample(const Tensor& states, Rng& rng) const {
    std::vector<Scalar> eps(states.dim(0) * config_.action_dim);
    for (auto& e : eps) e = rng.normal();
    return sample(states, Tensor::from_values({states.dim(0), config_.action_dim}, std::move(eps)));
}

Tensor SquashedGaussianPolicy::deterministic(const Tensor& states) const {
    return squash(distribution(states).first);
}

std::vector<double> SquashedGaussianPolicy::act(std::span<const double> states, std::size_t n, Rng& rng,
                                                bool deterministic_action) const {
    require(states.size() == n * config_.state_dim, "policy: state buffer size");
    ad::NoGradScope no_grad;
    const Tensor s = Tensor::from_values({n, config_.state_dim}, std::vector<Scalar>(states.begin(), states.end()));
    const Tensor a = deterministic_action ? deterministic(s) : sample(s, rng).actions;
    return {a.values().begin(), a.values().end()};
}

double squashed_log_density(std::span<const double> u, std::span<const double> mean, std::span<const double> log_std,
                            std::span<const double> half_range) {
    require(u.size() == mean.size() && u.size() == log_std.size() && u.size() == half_range.size(),
            "squashed_log_density: size mismatch");
    double total = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double z = (u[i] - mean[i]) * std::exp(-log_std[i]);
        total += -0.5 * z * z - log_std[i] - kHalfLog2Pi - log1m_tanh_sq(u[i]) - std::log(half_range[i]);
    }
    return total;
}

}  // namespace dhmbpo::agent

#include "dhmbpo/rollouts/lq.hpp"

#include <cmath>
#include <numbers>

#include "dhmbpo/core/error.hpp"

namespace dhmbpo::rollouts {

namespace {

// Forward-mode value with derivatives along (gain, offset, log_std).
struct Dual {
    double v = 0;
    std::array<double, 3> d{};
};
Dual operator+(Dual x, Dual y) {
    for (int i = 0; i < 3; ++i) x.d[i] += y.d[i];
    x.v += y.v;
    return x;
}
Dual operator-(Dual x, Dual y) {
    for (int i = 0; i < 3; ++i) x.d[i] -= y.d[i];
    x.v -= y.v;
    return x;
}
Dual operator*(Dual x, Dual y) {
    Dual r;
    r.v = x.v * y.v;
    for (int i = 0; i < 3; ++i) r.d[i] = x.d[i] * y.v + x.v * y.d[i];
    return r;
}
Dual operator/(Dual x, Dual y) {
    Dual r;
    r.v = x.v / y.v;
    for (int i = 0; i < 3; ++i) r.d[i] = (x.d[i] * y.v - x.v * y.d[i]) / (y.v * y.v);
    return r;
}
Dual constant(double c) { return Dual{c, {}}; }

template <class T>
struct ValueT {
    T p, q, v0;
};

// Solves p, q, v0 of V(s) = -(p s^2 + q s + v0) from the Bellman equation.
template <class T>
ValueT<T> solve(const LqSystem& sys, T k, T c, T sigma) {
    const T a = constant(sys.a), b = constant(sys.b), rho = constant(sys.control_cost), g = constant(sys.gamma);
    const T one = constant(1), two = constant(2), sw2 = constant(sys.noise_std * sys.noise_std);
    const T F = a + b * k;
    const T p = (one + rho * k * k) / (one - g * F * F);
    const T q = (two * rho * k * c + g * p * two * F * b * c) / (one - g * F);
    const T v0 = (rho * (c * c + sigma * sigma) + g * (p * (b * b * c * c + b * b * sigma * sigma + sw2) + q * b * c)) /
                 (one - g);
    return {p, q, v0};
}

}  // namespace

LqValue lq_value(const LqSystem& sys, const LqPolicyParams& pi) {
    const double F = sys.a + sys.b * pi.gain;
    require(sys.gamma >= 0 && sys.gamma < 1, "lq_value: gamma must lie in [0,1)");
    require(sys.gamma * F * F < 1, "lq_value: closed loop is not discounted-stable");
    const auto r = solve<Dual>(sys, constant(pi.gain), constant(pi.offset), constant(std::exp(pi.log_std)));
    return {r.p.v, r.q.v, r.v0.v};
}

double lq_state_value(const LqValue& v, double s) { return -(v.p * s * s + v.q * s + v.v0); }

double lq_action_value(const LqSystem& sys, const LqValue& v, double s, double u) {
    const double mean_next = sys.a * s + sys.b * u;
    const double next_sq = mean_next * mean_next + sys.noise_std * sys.noise_std;
    return -(s * s + sys.control_cost * u * u) - sys.gamma * (v.p * next_sq + v.q * mean_next + v.v0);
}

std::array<double, 3> lq_value_gradient(const LqSystem& sys, const LqPolicyParams& pi, double s) {
    Dual k = constant(pi.gain), c = constant(pi.offset), l = constant(pi.log_std);
    k.d[0] = 1;
    c.d[1] = 1;
    l.d[2] = 1;
    Dual sigma{std::exp(l.v), {0, 0, std::exp(l.v)}};
    const auto r = solve<Dual>(sys, k, c, sigma);
    std::array<double, 3> g{};
    for (int i = 0; i < 3; ++i) g[i] = -(r.p.d[i] * s * s + r.q.d[i] * s + r.v0.d[i]);
    return g;
}

ModelStep LqDynamics::step(const Tensor& states, const Tensor& actions, Rng& rng) const {
    require(states.rank() == 2 && states.dim(1) == 1 && actions.shape() == states.shape(),
            "LqDynamics: states and actions must be [B,1]");
    const std::size_t B = states.dim(0);
    std::vector<Scalar> w(B);
    for (auto& x : w) x = sys_.noise_std * rng.normal();
    ModelStep out;
    out.next_states = ad::scale(states, sys_.a) + ad::scale(actions, sys_.b) + Tensor::from_values({B, 1}, std::move(w));
    out.rewards = ad::reshape(-(ad::square(states) + ad::scale(ad::square(actions), sys_.control_cost)), {B});
    out.finite.assign(B, 1);
    return out;
}

LqCritic::LqCritic(const LqSystem& sys, const LqPolicyParams& pi, double beta)
    : sys_(sys), value_(lq_value(sys, pi)), beta_(beta) {}

LqCritic::LqCritic(const LqSystem& sys, const LinearGaussianPolicy& tracked, double beta)
    : sys_(sys), beta_(beta), tracked_(&tracked) {
    require(tracked.state_dim() == 1 && tracked.action_dim() == 1 && !tracked.squash_,
            "LqCritic: tracking needs an unsquashed scalar policy");
}

Tensor LqCritic::coefficients() const {
    if (!tracked_) return Tensor::from_values({3}, {value_.p, value_.q, value_.v0});
    const LqPolicyParams pi = tracked_->scalar_params();
    Dual k = constant(pi.gain), c = constant(pi.offset), l = constant(pi.log_std);
    k.d[0] = 1;
    c.d[1] = 1;
    l.d[2] = 1;
    const Dual sigma{std::exp(l.v), {0, 0, std::exp(l.v)}};
    const auto r = solve<Dual>(sys_, k, c, sigma);
    const std::array<Dual, 3> coef{r.p, r.q, r.v0};
    const std::vector<Tensor> inputs{tracked_->gain_, tracked_->offset_, tracked_->log_std_};
    return ad::make_result({3}, {r.p.v, r.q.v, r.v0.v}, inputs, [inputs, coef](const ad::Node& out) {
        for (int i = 0; i < 3; ++i) {
            if (!inputs[i].requires_grad()) continue;
            double g = 0;
            for (int j = 0; j < 3; ++j) g += out.grad[j] * coef[j].d[i];
            inputs[i].node()->grad_buffer()[0] += g;
        }
    });
}

Tensor LqCritic::q(const Tensor& states, const Tensor& actions) const {
    const std::size_t B = states.dim(0);
    const Tensor coef = coefficients();
    const Tensor p = ad::slice_last(coef, 0, 1), q = ad::slice_last(coef, 1, 2), v0 = ad::slice_last(coef, 2, 3);
    const Tensor mean_next = ad::reshape(ad::scale(states, sys_.a) + ad::scale(actions, sys_.b), {B});
    const double sw2 = sys_.noise_std * sys_.noise_std;
    // E[V(s')] = -(p (m^2 + sw^2) + q m + v0)
    const Tensor future = ad::mul(ad::add_scalar(ad::square(mean_next), sw2), p) + ad::mul(mean_next, q) +
                          ad::mul(Tensor::full({B}, 1.0), v0);
    const Tensor reward = ad::reshape(ad::square(states) + ad::scale(ad::square(actions), sys_.control_cost), {B});
    return ad::scale(-(reward + ad::scale(future, sys_.gamma)), beta_);
}

std::vector<double> LqCritic::target_q(const Tensor& states, const Tensor& actions, Rng&) const {
    ad::NoGradScope no_grad;
    const Tensor v = q(states.detach(), actions.detach());
    return {v.values().begin(), v.values().end()};
}

LinearGaussianPolicy::LinearGaussianPolicy(std::size_t state_dim, std::size_t action_dim, std::vector<double> gain,
                                           std::vector<double> offset, std::vector<double> log_std,
                                           std::optional<std::pair<std::vector<double>, std::vector<double>>> bounds)
    : state_dim_(state_dim), action_dim_(action_dim) {
    require(gain.size() == state_dim * action_dim && offset.size() == action_dim && log_std.size() == action_dim,
            "LinearGaussianPolicy: parameter sizes");
    gain_ = Tensor::parameter({state_dim, action_dim}, std::move(gain));
    offset_ = Tensor::parameter({action_dim}, std::move(offset));
    log_std_ = Tensor::parameter({action_dim}, std::move(log_std));
    params_.add("gain", gain_);
    params_.add("offset", offset_);
    params_.add("log_std", log_std_);
    if (bounds) {
        const auto& [low, high] = *bounds;
        require(low.size() == action_dim && high.size() == action_dim, "LinearGaussianPolicy: bounds size");
        std::vector<Scalar> c(action_dim), h(action_dim);
        for (std::size_t i = 0; i < action_dim; ++i) {
            c[i] = 0.5 * (high[i] + low[i]);
            h[i] = 0.5 * (high[i] - low[i]);
            log_half_sum_ += std::log(h[i]);
        }
        squash_ = true;
        center_ = Tensor::from_values({action_dim}, std::move(c));
        half_ = Tensor::from_values({action_dim}, std::move(h));
    }
}

LinearGaussianPolicy LinearGaussianPolicy::scalar(const LqPolicyParams& p) {
    return LinearGaussianPolicy(1, 1, {p.gain}, {p.offset}, {p.log_std});
}

LqPolicyParams LinearGaussianPolicy::scalar_params() const {
    require(state_dim_ == 1 && action_dim_ == 1, "LinearGaussianPolicy: not a scalar policy");
    return {gain_[0], offset_[0], log_std_[0]};
}

agent::PolicyOutput LinearGaussianPolicy::sample(const Tensor& states, Rng& rng) const {
    std::vector<Scalar> eps(states.dim(0) * action_dim_);
    for (auto& e : eps) e = rng.normal();
    return sample(states, Tensor::from_values({states.dim(0), action_dim_}, std::move(eps)));
}

agent::PolicyOutput LinearGaussianPolicy::sample(const Tensor& states, const Tensor& noise) const {
    require(states.rank() == 2 && states.dim(1) == state_dim_, "LinearGaussianPolicy: states must be [B,S]");
    const std::size_t B = states.dim(0);
    require(noise.shape() == ad::Shape{B, action_dim_}, "LinearGaussianPolicy: noise must be [B,A]");
    const Tensor u = ad::add(ad::matmul(states, gain_), offset_) + ad::mul(noise, ad::exp(log_std_));
    std::vector<Scalar> half_sq(noise.numel());
    for (std::size_t i = 0; i < half_sq.size(); ++i) half_sq[i] = -0.5 * noise[i] * noise[i];
    const double A = static_cast<double>(action_dim_);
    const double c = -A * 0.5 * std::log(2 * std::numbers::pi);
    // log N(u) per row: sum(-eps^2/2) - sum(log_std) + c
    Tensor lp = ad::sum_last(Tensor::from_values({B, action_dim_}, std::move(half_sq)) - ad::broadcast_leading(log_std_, B));
    lp = ad::add_scalar(lp, c);
    if (!squash_) return {u, lp};
    const Tensor actions = ad::add(ad::mul(ad::tanh(u), half_), center_);
    lp = ad::add_scalar(lp - ad::sum_last(ad::log1m_tanh_sq(u)), -log_half_sum_);
    return {actions, lp};
}

}  // namespace dhmbpo::rollouts

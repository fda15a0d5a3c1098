#include "dhmbpo/autodiff/optim.hpp"

#include <cmath>

#include "dhmbpo/autodiff/checkpoint.hpp"
#include "dhmbpo/core/error.hpp"

namespace dhmbpo::ad {

AdamW::AdamW(ParameterSet* params, AdamConfig config) : params_(params), config_(config) {
    require(params_ != nullptr, "AdamW: null parameter set");
    require(config_.learning_rate >= 0 && config_.epsilon > 0, "AdamW: bad hyperparameters");
    for (const auto& e : params_->entries()) {
        state_.first_moment.emplace_back(e.tensor.numel(), Scalar(0));
        state_.second_moment.emplace_back(e.tensor.numel(), Scalar(0));
    }
}

void AdamW::step() {
    require(params_ != nullptr, "AdamW: optimizer not bound to parameters");
    auto& entries = params_->entries();
    require(entries.size() == state_.first_moment.size(), "AdamW: parameter set changed size");
    for (const auto& e : entries)
        require(e.tensor.has_grad(), "AdamW: missing gradient for '" + e.name + "'");

    ++state_.step;
    const double t = static_cast<double>(state_.step);
    const double correction1 = 1.0 - std::pow(config_.beta1, t);
    const double correction2 = 1.0 - std::pow(config_.beta2, t);
    const auto lr = static_cast<Scalar>(config_.learning_rate);
    const auto b1 = static_cast<Scalar>(config_.beta1);
    const auto b2 = static_cast<Scalar>(config_.beta2);
    const auto eps = static_cast<Scalar>(config_.epsilon);
    const auto c1 = static_cast<Scalar>(correction1);
    const auto c2 = static_cast<Scalar>(correction2);

    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto& e = entries[i];
        auto w = e.tensor.mutable_values();
        const auto g = e.tensor.grad();
        auto& m = state_.first_moment[i];
        auto& v = state_.second_moment[i];
        require(m.size() == w.size(), "AdamW: accumulator shape mismatch for '" + e.name + "'");
        for (std::size_t k = 0; k < w.size(); ++k) {
            Scalar grad = g[k];
            if (e.decay > 0) {
                if (config_.decoupled_decay)
                    w[k] -= lr * e.decay * w[k];
                else
                    grad += e.decay * w[k];
            }
            m[k] = b1 * m[k] + (Scalar(1) - b1) * grad;
            v[k] = b2 * v[k] + (Scalar(1) - b2) * grad * grad;
            const Scalar m_hat = m[k] / c1;
            const Scalar v_hat = v[k] / c2;
            w[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

void AdamW::save(TensorArchive& archive, const std::string& prefix) const {
    const auto& entries = params_->entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        archive.put(prefix + "m/" + entries[i].name, entries[i].tensor.shape(), state_.first_moment[i]);
        archive.put(prefix + "v/" + entries[i].name, entries[i].tensor.shape(), state_.second_moment[i]);
    }
    archive.put_scalar(prefix + "step", static_cast<double>(state_.step));
}

void AdamW::load(const TensorArchive& archive, const std::string& prefix) {
    const auto& entries = params_->entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        archive.read_into(prefix + "m/" + entries[i].name, entries[i].tensor.shape(), state_.first_moment[i]);
        archive.read_into(prefix + "v/" + entries[i].name, entries[i].tensor.shape(), state_.second_moment[i]);
    }
    state_.step = static_cast<std::uint64_t>(archive.get_scalar(prefix + "step"));
}

}  // namespace dhmbpo::ad

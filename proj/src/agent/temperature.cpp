#include "dhmbpo/agent/temperature.hpp"

#include <cmath>

#include "dhmbpo/autodiff/checkpoint.hpp"
#include "dhmbpo/autodiff/tape.hpp"
#include "dhmbpo/core/error.hpp"

namespace dhmbpo::agent {

EntropyTemperature::EntropyTemperature(double initial_alpha, double learning_rate, double target_entropy)
    : target_entropy_(target_entropy) {
    require(initial_alpha > 0, "EntropyTemperature: initial alpha must be positive");
    log_alpha_ = ad::Tensor::parameter({1}, {std::log(initial_alpha)});
    params_.add("log_alpha", log_alpha_);
    ad::AdamConfig cfg;
    cfg.learning_rate = learning_rate;
    optimizer_ = ad::AdamW(&params_, cfg);
}

double EntropyTemperature::alpha() const { return std::exp(log_alpha()); }

double EntropyTemperature::update(std::span<const double> log_probs) {
    require(!log_probs.empty(), "EntropyTemperature: empty log-prob batch");
    double gap = 0;
    for (double lp : log_probs) gap += -lp - target_entropy_;
    gap /= static_cast<double>(log_probs.size());
    params_.zero_grad();
    ad::Tape tape;
    double loss = 0;
    {
        ad::TapeScope scope(tape);
        const ad::Tensor l = ad::sum(ad::exp(log_alpha_) * gap);
        loss = l.item();
        tape.backward(l);
    }
    optimizer_.step();
    return loss;
}

void EntropyTemperature::save(ad::TensorArchive& archive, const std::string& prefix) const {
    params_.save(archive, prefix);
    optimizer_.save(archive, prefix + "adam/");
}

void EntropyTemperature::load(const ad::TensorArchive& archive, const std::string& prefix) {
    params_.load(archive, prefix);
    optimizer_.load(archive, prefix + "adam/");
}

}  // namespace dhmbpo::agent

#pragma once

#include <span>
#include <string>

#include "dhmbpo/autodiff/optim.hpp"

namespace dhmbpo::agent {

// Entropy temperature alpha = exp(log_alpha), tuned by a dual step on
// mean(alpha * (-log pi - target_entropy)).
class EntropyTemperature {
public:
    EntropyTemperature(double initial_alpha, double learning_rate, double target_entropy);
    EntropyTemperature(const EntropyTemperature&) = delete;
    EntropyTemperature& operator=(const EntropyTemperature&) = delete;

    double alpha() const;
    double log_alpha() const { return log_alpha_.values()[0]; }
    double target_entropy() const { return target_entropy_; }

    // Returns the temperature loss before the step.
    double update(std::span<const double> log_probs);

    void save(ad::TensorArchive& archive, const std::string& prefix) const;
    void load(const ad::TensorArchive& archive, const std::string& prefix);

private:
    double target_entropy_;
    ad::Tensor log_alpha_;
    ad::ParameterSet params_;
    ad::AdamW optimizer_;
};

}  // namespace dhmbpo::agent

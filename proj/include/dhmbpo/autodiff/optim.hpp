#pragma once

#include <string>
#include <vector>

#include "dhmbpo/autodiff/nn.hpp"

namespace dhmbpo::ad {

struct AdamConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // true: decoupled decay (AdamW); false: decay folded into the gradient.
    bool decoupled_decay = true;
};

struct OptimizerState {
    std::vector<std::vector<Scalar>> first_moment;
    std::vector<std::vector<Scalar>> second_moment;
    std::uint64_t step = 0;
};

// Adam with per-parameter decay coefficients taken from the ParameterSet.
class AdamW {
public:
    AdamW() = default;
    AdamW(ParameterSet* params, AdamConfig config);

    // Consumes the accumulated gradients; every parameter must have one.
    void step();

    const AdamConfig& config() const { return config_; }
    const OptimizerState& state() const { return state_; }
    void set_learning_rate(double lr) { config_.learning_rate = lr; }

    void save(TensorArchive& archive, const std::string& prefix) const;
    void load(const TensorArchive& archive, const std::string& prefix);

private:
    ParameterSet* params_ = nullptr;
    AdamConfig config_;
    OptimizerState state_;
};

}  // namespace dhmbpo::ad

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dhmbpo/autodiff/ops.hpp"
#include "dhmbpo/core/rng.hpp"

namespace dhmbpo::ad {

class TensorArchive;

struct NamedParameter {
    std::string name;
    Tensor tensor;
    Scalar decay = 0;  // weight-decay coefficient consumed by the optimizer
};

// Named, uniquely keyed collection of leaf tensors.
class ParameterSet {
public:
    void add(std::string name, Tensor tensor, Scalar decay = 0);
    // Appends every entry of `other` with `prefix` prepended to its name.
    void extend(const ParameterSet& other, const std::string& prefix = "");

    std::size_t size() const { return entries_.size(); }
    const std::vector<NamedParameter>& entries() const { return entries_; }
    std::vector<NamedParameter>& entries() { return entries_; }
    const Tensor& find(const std::string& name) const;
    std::size_t scalar_count() const;

    void zero_grad();
    void set_requires_grad(bool flag);
    double grad_norm() const;
    void scale_grad(Scalar factor);

    // Copies values from a set with identical names and shapes.
    void copy_from(const ParameterSet& source);
    // this <- c * this + (1 - c) * source, elementwise.
    void blend_toward(const ParameterSet& source, Scalar momentum);

    void save(TensorArchive& archive, const std::string& prefix) const;
    void load(const TensorArchive& archive, const std::string& prefix);

private:
    std::vector<NamedParameter> entries_;
};

// Suspends gradient accumulation for a parameter set (e.g. the model inside
// a training rollout) and restores the flags afterwards.
class FrozenScope {
public:
    explicit FrozenScope(ParameterSet& params);
    FrozenScope(const FrozenScope&) = delete;
    FrozenScope& operator=(const FrozenScope&) = delete;
    ~FrozenScope();

private:
    ParameterSet& params_;
    std::vector<bool> previous_;
};

enum class Activation { silu, relu };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation activation);

// Hidden block layout: Linear -> Dropout -> Activation -> (LayerNorm).
struct MlpConfig {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::vector<std::size_t> hidden;
    Activation activation = Activation::silu;
    bool layer_norm = false;
    std::vector<double> dropout;  // one per hidden layer, or empty for none
    std::vector<double> decay;    // one per linear layer, or empty for zero
};

Tensor activate(const Tensor& x, Activation activation);

// Plain multilayer perceptron on [B,in] inputs.
class Mlp {
public:
    Mlp() = default;
    Mlp(const MlpConfig& config, Rng& rng);

    Tensor forward(const Tensor& x, bool training, Rng* rng) const;

    const MlpConfig& config() const { return config_; }
    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }

private:
    MlpConfig config_;
    ParameterSet params_;
    std::vector<Tensor> weights_, biases_, gains_, shifts_;
};

// M independent MLPs evaluated in one pass along a leading ensemble axis.
class EnsembleMlp {
public:
    EnsembleMlp() = default;
    EnsembleMlp(std::size_t members, const MlpConfig& config, Rng& rng);

    std::size_t members() const { return members_; }
    const MlpConfig& config() const { return config_; }

    // x [B,in] (shared by all members) or [M,B,in] -> [M,B,out].
    Tensor forward(const Tensor& x, bool training, Rng* rng) const;
    // Row i of x [B,in] through member members[i] -> [B,out].
    Tensor forward_routed(const Tensor& x, std::span<const std::uint32_t> members, bool training,
                          Rng* rng) const;

    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }

private:
    std::size_t members_ = 0;
    MlpConfig config_;
    ParameterSet params_;
    std::vector<Tensor> weights_, biases_, gains_, shifts_;
};

// Default initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
std::vector<Scalar> uniform_init(std::size_t count, std::size_t fan_in, Rng& rng);

}  // namespace dhmbpo::ad

#include "dhmbpo/autodiff/nn.hpp"

#include <cmath>

#include "dhmbpo/autodiff/checkpoint.hpp"
#include "dhmbpo/core/error.hpp"

namespace dhmbpo::ad {

void ParameterSet::add(std::string name, Tensor tensor, Scalar decay) {
    require(tensor.defined(), "ParameterSet: undefined tensor '" + name + "'");
    require(decay >= 0, "ParameterSet: negative decay for '" + name + "'");
    for (const auto& e : entries_) require(e.name != name, "ParameterSet: duplicate name '" + name + "'");
    entries_.push_back({std::move(name), std::move(tensor), decay});
}

void ParameterSet::extend(const ParameterSet& other, const std::string& prefix) {
    for (const auto& e : other.entries_) add(prefix + e.name, e.tensor, e.decay);
}

const Tensor& ParameterSet::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e.tensor;
    throw ContractViolation("ParameterSet: no parameter named '" + name + "'");
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

void ParameterSet::set_requires_grad(bool flag) {
    for (auto& e : entries_) e.tensor.set_requires_grad(flag);
}

double ParameterSet::grad_norm() const {
    double total = 0;
    for (const auto& e : entries_)
        for (Scalar g : e.tensor.grad()) total += static_cast<double>(g) * g;
    return std::sqrt(total);
}

void ParameterSet::scale_grad(Scalar factor) {
    for (auto& e : entries_)
        if (e.tensor.has_grad())
            for (Scalar& g : e.tensor.mutable_grad()) g *= factor;
}

void ParameterSet::copy_from(const ParameterSet& source) {
    require(source.size() == size(), "ParameterSet::copy_from: size mismatch");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& src = source.entries_[i];
        require(src.name == entries_[i].name && src.tensor.shape() == entries_[i].tensor.shape(),
                "ParameterSet::copy_from: layout mismatch at '" + entries_[i].name + "'");
        auto dst = entries_[i].tensor.mutable_values();
        std::copy(src.tensor.values().begin(), src.tensor.values().end(), dst.begin());
    }
}

void ParameterSet::blend_toward(const ParameterSet& source, Scalar momentum) {
    require(source.size() == size(), "ParameterSet::blend_toward: size mismatch");
    const Scalar rest = Scalar(1) - momentum;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto src = source.entries_[i].tensor.values();
        auto dst = entries_[i].tensor.mutable_values();
        require(src.size() == dst.size(), "ParameterSet::blend_toward: layout mismatch");
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = momentum * dst[k] + rest * src[k];
    }
}

void ParameterSet::save(TensorArchive& archive, const std::string& prefix) const {
    for (const auto& e : entries_) archive.put(prefix + e.name, e.tensor);
}

void ParameterSet::load(const TensorArchive& archive, const std::string& prefix) {
    for (auto& e : entries_) archive.read_into(prefix + e.name, e.tensor.shape(), e.tensor.mutable_values());
}

FrozenScope::FrozenScope(ParameterSet& params) : params_(params) {
    for (auto& e : params_.entries()) {
        previous_.push_back(e.tensor.requires_grad());
        e.tensor.set_requires_grad(false);
    }
}

FrozenScope::~FrozenScope() {
    auto& entries = params_.entries();
    for (std::size_t i = 0; i < entries.size() && i < previous_.size(); ++i)
        entries[i].tensor.set_requires_grad(previous_[i]);
}

Activation parse_activation(const std::string& name) {
    if (name == "silu") return Activation::silu;
    if (name == "relu") return Activation::relu;
    throw ContractViolation("unknown activation '" + name + "'");
}

std::string activation_name(Activation activation) {
    return activation == Activation::silu ? "silu" : "relu";
}

Tensor activate(const Tensor& x, Activation activation) {
    return activation == Activation::silu ? silu(x) : relu(x);
}

std::vector<Scalar> uniform_init(std::size_t count, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    std::vector<Scalar> v(count);
    for (auto& x : v) x = static_cast<Scalar>(rng.uniform(-bound, bound));
    return v;
}

namespace {

void check_config(const MlpConfig& c) {
    require(c.input_dim > 0 && c.output_dim > 0, "MlpConfig: dimensions must be positive");
    require(c.dropout.empty() || c.dropout.size() == c.hidden.size(), "MlpConfig: one dropout rate per hidden layer");
    require(c.decay.empty() || c.decay.size() == c.hidden.size() + 1, "MlpConfig: one decay per linear layer");
    for (double p : c.dropout) require(p >= 0 && p < 1, "MlpConfig: dropout rate outside [0,1)");
}

Scalar layer_decay(const MlpConfig& c, std::size_t layer) {
    return c.decay.empty() ? Scalar(0) : static_cast<Scalar>(c.decay[layer]);
}

double layer_dropout(const MlpConfig& c, std::size_t layer) { return c.dropout.empty() ? 0.0 : c.dropout[layer]; }

}  // namespace

Mlp::Mlp(const MlpConfig& config, Rng& rng) : config_(config) {
    check_config(config_);
    std::size_t in = config_.input_dim;
    const std::size_t layers = config_.hidden.size() + 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t out = l + 1 < layers ? config_.hidden[l] : config_.output_dim;
        weights_.push_back(Tensor::parameter({in, out}, uniform_init(in * out, in, rng)));
        biases_.push_back(Tensor::parameter({out}, uniform_init(out, in, rng)));
        params_.add("l" + std::to_string(l) + ".weight", weights_.back(), layer_decay(config_, l));
        params_.add("l" + std::to_string(l) + ".bias", biases_.back(), layer_decay(config_, l));
        if (config_.layer_norm && l + 1 < layers) {
            gains_.push_back(Tensor::parameter({out}, std::vector<Scalar>(out, Scalar(1))));
            shifts_.push_back(Tensor::parameter({out}, std::vector<Scalar>(out, Scalar(0))));
            params_.add("l" + std::to_string(l) + ".ln_gain", gains_.back());
            params_.add("l" + std::to_string(l) + ".ln_bias", shifts_.back());
        }
        in = out;
    }
}

Tensor Mlp::forward(const Tensor& x, bool training, Rng* rng) const {
    Tensor h = x;
    const std::size_t hidden = config_.hidden.size();
    for (std::size_t l = 0; l <= hidden; ++l) {
        h = linear(h, weights_[l], biases_[l]);
        if (l == hidden) break;
        const double p = layer_dropout(config_, l);
        if (training && p > 0) {
            require(rng != nullptr, "Mlp: dropout in training mode needs an rng");
            h = dropout(h, p, true, *rng);
        }
        h = activate(h, config_.activation);
        if (config_.layer_norm) h = layer_norm(h, gains_[l], shifts_[l]);
    }
    return h;
}

EnsembleMlp::EnsembleMlp(std::size_t members, const MlpConfig& config, Rng& rng)
    : members_(members), config_(config) {
    require(members > 0, "EnsembleMlp: need at least one member");
    check_config(config_);
    std::size_t in = config_.input_dim;
    const std::size_t layers = config_.hidden.size() + 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t out = l + 1 < layers ? config_.hidden[l] : config_.output_dim;
        weights_.push_back(Tensor::parameter({members, in, out}, uniform_init(members * in * out, in, rng)));
        biases_.push_back(Tensor::parameter({members, out}, uniform_init(members * out, in, rng)));
        params_.add("l" + std::to_string(l) + ".weight", weights_.back(), layer_decay(config_, l));
        params_.add("l" + std::to_string(l) + ".bias", biases_.back(), layer_decay(config_, l));
        if (config_.layer_norm && l + 1 < layers) {
            gains_.push_back(Tensor::parameter({members, out}, std::vector<Scalar>(members * out, Scalar(1))));
            shifts_.push_back(Tensor::parameter({members, out}, std::vector<Scalar>(members * out, Scalar(0))));
            params_.add("l" + std::to_string(l) + ".ln_gain", gains_.back());
            params_.add("l" + std::to_string(l) + ".ln_bias", shifts_.back());
        }
        in = out;
    }
}

Tensor EnsembleMlp::forward(const Tensor& x, bool training, Rng* rng) const {
    Tensor h = x;
    const std::size_t hidden = config_.hidden.size();
    for (std::size_t l = 0; l <= hidden; ++l) {
        h = ensemble_linear(h, weights_[l], biases_[l]);
        if (l == hidden) break;
        const double p = layer_dropout(config_, l);
        if (training && p > 0) {
            require(rng != nullptr, "EnsembleMlp: dropout in training mode needs an rng");
            h = dropout(h, p, true, *rng);
        }
        h = activate(h, config_.activation);
        if (config_.layer_norm) h = layer_norm(h, gains_[l], shifts_[l]);
    }
    return h;
}

Tensor EnsembleMlp::forward_routed(const Tensor& x, std::span<const std::uint32_t> members, bool training,
                                   Rng* rng) const {
    const std::size_t hidden = config_.hidden.size();
    Tensor h = x;
    for (std::size_t l = 0; l <= hidden; ++l) {
        h = routed_linear(h, weights_[l], biases_[l], members);
        if (l == hidden) break;
        const double p = layer_dropout(config_, l);
        if (training && p > 0) {
            require(rng != nullptr, "EnsembleMlp: dropout in training mode needs an rng");
            h = dropout(h, p, true, *rng);
        }
        h = activate(h, config_.activation);
        if (config_.layer_norm) {
            // Per-row affine parameters of the routed member.
            const std::size_t width = h.dim(1);
            Tensor normalized = layer_norm(h, Tensor::full({width}, 1), Tensor::zeros({width}));
            std::vector<std::size_t> rows(members.begin(), members.end());
            h = normalized * index_rows(gains_[l], rows) + index_rows(shifts_[l], rows);
        }
    }
    return h;
}

}  // namespace dhmbpo::ad

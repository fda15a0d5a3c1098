#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dhmbpo/autodiff/nn.hpp"
#include "dhmbpo/autodiff/optim.hpp"
#include "dhmbpo/buffers/buffer.hpp"
#include "dhmbpo/buffers/norm_stats.hpp"
#include "dhmbpo/core/rng.hpp"
#include "dhmbpo/model/early_stopping.hpp"

namespace dhmbpo::model {

using ad::Scalar;
using ad::Tensor;

struct ModelConfig {
    std::size_t members = 8;
    std::vector<std::size_t> hidden{256, 256, 256};
    std::vector<double> dropout{0.0075, 0.005, 0.0025};
    std::vector<double> decay{0.00025, 0.0005, 0.00075, 0.001};
    double learning_rate = 1e-3;
    double log_sigma_min = -10, log_sigma_max = 4;
    double log_sigma_init = 0;
    std::size_t batch_size = 256;
    double holdout_ratio = 0.2;
    std::size_t max_holdout = 5000;
    double patience_base = 5;   // b in ceil(b * ln d_S)
    double significance = 0.1;  // one-sided Z-test level
    std::size_t max_epochs = 0;             // 0: until early stopping
    std::size_t max_batches_per_epoch = 0;  // 0: full pass over the training split
};

// Weighted Gaussian NLL with homoscedastic per-member noise:
// (1/MND) sum_m sum_n w_mn sum_d [log sigma_md + 0.5 ((t_nd - mu_mnd) / sigma_md)^2].
// mu [M,N,D], log_sigma [M,D], target [N,D] (constant), weights [M,N] (constant).
Tensor gaussian_nll(const Tensor& mu, const Tensor& log_sigma, std::span<const Scalar> target,
                    std::span<const Scalar> weights);

// Moment-matched score per datum: means [M,N,D], variances [M,D], targets [N,D].
// Ensemble spread uses the sample variance (divisor M - 1; zero when M = 1).
std::vector<double> validation_scores(std::span<const double> means, std::span<const double> variances,
                                      std::span<const double> targets, std::size_t members, std::size_t n,
                                      std::size_t d);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0;
    double val_mean = 0, val_var = 0;
    std::size_t val_count = 0;
    bool improved = false;
};

struct FitReport {
    std::vector<EpochRecord> epochs;
    std::size_t stop_epoch = 0;  // epochs trained
    std::size_t best_epoch = 0;  // 0: the parameters before this fit
    std::size_t patience = 0;
    std::size_t train_count = 0, val_count = 0;
    double best_val_mean = 0;

    void write_csv(const std::string& path) const;
};

// Transforms the validation scores of an epoch (epoch 0 = before training).
using ScoreHook = std::function<void(std::size_t epoch, std::vector<double>& scores)>;

// Output of one TS-1 step for a batch.
struct Prediction {
    std::vector<double> next_states;  // [B,S] raw
    std::vector<double> rewards;      // [B] raw
    std::vector<std::uint32_t> members;
    std::vector<std::uint8_t> finite;  // 0 where the prediction was not finite
};

// Differentiable TS-1 step in raw (unnormalized) coordinates.
struct DifferentiableStep {
    Tensor next_states;  // [B,S]
    Tensor rewards;      // [B]
};

// Bootstrap ensemble of Gaussian networks predicting normalized displacement and reward.
class EnsembleGaussianModel {
public:
    EnsembleGaussianModel(std::size_t state_dim, std::size_t action_dim, ModelConfig config, Rng& rng);
    // Parameters are shared handles and the optimizer points at them.
    EnsembleGaussianModel(const EnsembleGaussianModel&) = delete;
    EnsembleGaussianModel& operator=(const EnsembleGaussianModel&) = delete;

    std::size_t state_dim() const { return state_dim_; }
    std::size_t action_dim() const { return action_dim_; }
    std::size_t output_dim() const { return state_dim_ + 1; }
    std::size_t members() const { return config_.members; }
    const ModelConfig& config() const { return config_; }
    bool trained() const { return fits_ > 0; }
    std::size_t fits() const { return fits_; }

    const buffers::NormStats& stats() const { return stats_; }
    void set_stats(const buffers::NormStats& stats) { stats_ = stats; }

    // Trains on the whole buffer with an 80/20 split, Z-test early stopping and
    // best-parameter restore. `stats` becomes the model's normalization.
    FitReport fit(const buffers::TransitionBuffer& data, const buffers::NormStats& stats, Rng& rng,
                  const ScoreHook& hook = {});

    // Member means [M,N,S+1] for normalized inputs [N,S+A]; evaluation mode.
    Tensor forward_normalized(const Tensor& inputs, bool training = false, Rng* rng = nullptr) const;
    // [M,S+1] variances sigma^2.
    std::vector<double> variances() const;

    // Model inputs [N,S+A] and normalized targets [N,S+1] for raw transitions.
    void make_inputs(std::span<const double> states, std::span<const double> actions, std::size_t n,
                     std::vector<Scalar>& out) const;
    void make_targets(const buffers::Batch& batch, std::vector<Scalar>& out) const;

    // Gradient-free TS-1: member drawn uniformly per input, Gaussian sample
    // scaled by noise_scale, successor formed in normalized space.
    Prediction ts1_predict(std::span<const double> states, std::span<const double> actions, std::size_t n,
                           Rng& rng, double noise_scale = 1.0) const;

    // Differentiable TS-1 through states and actions; model parameters are
    // constants. Rows listed in finite=0 hold non-finite values.
    DifferentiableStep ts1_step(const Tensor& states, const Tensor& actions, Rng& rng, double noise_scale,
                                std::vector<std::uint8_t>* finite = nullptr) const;

    // Moment-matched mean prediction of raw next state and reward.
    void mean_prediction(std::span<const double> states, std::span<const double> actions, std::size_t n,
                         std::vector<double>& next_states, std::vector<double>& rewards) const;

    ad::ParameterSet& parameters() { return params_; }
    const ad::ParameterSet& parameters() const { return params_; }

    void save(ad::TensorArchive& archive, const std::string& prefix) const;
    void load(const ad::TensorArchive& archive, const std::string& prefix);

private:
    void project_log_sigma();

    std::size_t state_dim_ = 0, action_dim_ = 0;
    ModelConfig config_;
    ad::EnsembleMlp net_;
    Tensor log_sigma_;  // [M,S+1]
    ad::ParameterSet params_;
    ad::AdamW optimizer_;
    buffers::NormStats stats_;
    std::size_t fits_ = 0;
};

struct RmseReport {
    std::string split;
    std::size_t count = 0;
    double state_rmse = 0, reward_rmse = 0;
};

double rmse(std::span<const double> prediction, std::span<const double> target);

// RMSE of the moment-matched mean against raw next states and rewards.
RmseReport offline_rmse(const EnsembleGaussianModel& model, const buffers::Batch& data, const std::string& split);

}  // namespace dhmbpo::model

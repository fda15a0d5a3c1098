#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dhmbpo/agent/critics.hpp"
#include "dhmbpo/agent/policy.hpp"
#include "dhmbpo/agent/q_bounds.hpp"
#include "dhmbpo/agent/temperature.hpp"
#include "dhmbpo/algo/config.hpp"
#include "dhmbpo/autodiff/optim.hpp"
#include "dhmbpo/buffers/buffer.hpp"
#include "dhmbpo/buffers/norm_stats.hpp"
#include "dhmbpo/envs/environment.hpp"
#include "dhmbpo/model/ensemble_model.hpp"
#include "dhmbpo/rollouts/rollouts.hpp"

namespace dhmbpo::algo {

// One row of metrics.csv, written at every evaluation tick. Update
// statistics are means over the updates since the previous row (NaN if none).
struct MetricsRow {
    std::size_t env_step = 0;
    std::size_t episode = 0;
    double test_return_mean = 0, test_return_std = 0;
    double critic_loss = 0, actor_objective = 0;
    double alpha = 0, grad_norm = 0;
    double q_low = 0, q_high = 0;
    std::size_t model_stop_epoch = 0;
    std::size_t updates = 0;
    std::size_t clipped_targets = 0;
    std::size_t clipped_gradients = 0;
    std::size_t masked_rows = 0;
    std::size_t dropped_episodes = 0;
};

std::string metrics_header();
std::string format_metrics(const MetricsRow& row);
MetricsRow parse_metrics(const std::string& line);

struct UpdateRow {
    std::size_t update = 0, episode = 0, env_step = 0;
    double critic_loss = 0, actor_objective = 0, alpha = 0, grad_norm = 0;
    bool grad_clipped = false;
    std::size_t clipped_targets = 0;
    double q_low = 0, q_high = 0;
    buffers::Provenance critic_source = buffers::Provenance::environment;
    buffers::Provenance actor_source = buffers::Provenance::environment;
};

std::string updates_header();
std::string format_update(const UpdateRow& row);

// Everything a critic step used, for oracles and histograms.
struct CriticTrace {
    const buffers::Batch* batch = nullptr;
    const rollouts::MveTarget* target = nullptr;
    const rollouts::Trajectory* trajectory = nullptr;  // only when T > 0
    Rng rng_before_target;                             // stream state just before the target draw
    agent::TargetReport report;
    agent::QBounds bounds;  // as used for this target
    double alpha = 0;
    std::size_t env_step = 0;
};

struct ActorTrace {
    std::span<const buffers::Provenance> provenance;
    double objective = 0;
    rollouts::GradientReport gradient;
};

struct TrainerHooks {
    std::function<void(const CriticTrace&)> on_critic;
    std::function<void(const ActorTrace&)> on_actor;
    std::function<void(const MetricsRow&)> on_metrics;
};

// Counts of model-side work; all zero for the model-free variant.
struct ModelActivity {
    std::size_t fits = 0;
    std::size_t dr_refreshes = 0;
    std::size_t model_steps = 0;  // batched dynamics calls
};

// The full training loop for one (task, seed, variant). Not copyable: the
// optimizers hold pointers into the parameter sets.
class Trainer {
public:
    Trainer(AlgoConfig config, std::string task_id, std::uint64_t seed);
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    // One outer iteration: collect an episode, fit, L * UTD updates, clear D_m.
    void iterate();
    // Iterates until the step budget is spent.
    void train();
    bool finished() const { return env_steps_ >= config_.total_steps; }
    // New step budget for a resumed run; must not be below the steps already taken.
    void set_total_steps(std::size_t steps);

    // Single updates, also used by the loop. Return the loss / objective.
    double critic_update(const buffers::Batch& batch);
    double actor_update(const buffers::Batch& starts);
    // Mean squared error step of every member against a fixed target, then the EMA.
    double regress_critics(const buffers::Batch& batch, const rollouts::MveTarget& target);
    void refresh_model_buffer();
    // From D_m when D > 0 (falling back to D_e while it is empty), else D_e.
    buffers::Batch sample_training_batch();
    buffers::Batch sample_batch(buffers::Provenance source, std::size_t size);

    // Fresh critic networks, optimizer and update/rollout streams; everything
    // else is kept. Used by the critic-learning analysis.
    void reset_critics(std::uint64_t seed);
    // Gradient-free T-step value-expansion estimate at (s, a) pairs, T from the variant.
    rollouts::MveTarget mve_estimate(const buffers::Batch& pairs, Rng& rng) const;
    const rollouts::Dynamics& dynamics() const;

    void set_hooks(TrainerHooks hooks) { hooks_ = std::move(hooks); }

    const AlgoConfig& config() const { return config_; }
    const std::string& task_id() const { return task_id_; }
    std::uint64_t seed() const { return seed_; }
    const envs::EnvSpec& spec() const { return task_->spec(); }
    std::shared_ptr<const envs::Task> task() const { return task_; }

    std::size_t env_steps() const { return env_steps_; }
    std::size_t episodes() const { return episodes_; }
    std::size_t updates() const { return updates_; }
    std::size_t dropped_episodes() const { return dropped_; }
    const ModelActivity& model_activity() const { return activity_; }

    agent::SquashedGaussianPolicy& policy() { return *policy_; }
    const agent::SquashedGaussianPolicy& policy() const { return *policy_; }
    agent::CriticEnsemble& critics() { return *critics_; }
    const agent::CriticEnsemble& critics() const { return *critics_; }
    // Null for the model-free variant.
    model::EnsembleGaussianModel* model() { return model_.get(); }
    const model::EnsembleGaussianModel* model() const { return model_.get(); }
    const agent::QBounds& bounds() const { return bounds_; }
    agent::EntropyTemperature& temperature() { return *temperature_; }
    const agent::EntropyTemperature& temperature() const { return *temperature_; }
    const buffers::TransitionBuffer& replay() const { return replay_; }
    buffers::TransitionBuffer& replay() { return replay_; }
    const buffers::TransitionBuffer& model_buffer() const { return model_buffer_; }
    const buffers::NormStats& stats() const { return stats_; }
    const std::vector<MetricsRow>& metrics() const { return metrics_; }
    const std::vector<UpdateRow>& update_log() const { return update_log_; }

    // Deterministic-action evaluation with the current policy.
    envs::TestReturn evaluate(std::size_t episodes, std::uint64_t seed) const;

    void write_metrics(const std::filesystem::path& path) const;
    void write_updates(const std::filesystem::path& path) const;

    // Checkpoints at an outer-iteration boundary. Loading requires a trainer
    // built with the same config, task and seed.
    void save_checkpoint(const std::filesystem::path& dir) const;
    void load_checkpoint(const std::filesystem::path& dir);
    static std::unique_ptr<Trainer> resume(const std::filesystem::path& dir);

private:
    bool collect_episode();
    void evaluate_tick(std::size_t env_step);
    agent::CriticConfig critic_config() const;

    AlgoConfig config_;
    std::string task_id_;
    std::uint64_t seed_;
    std::shared_ptr<const envs::Task> task_;

    std::unique_ptr<agent::SquashedGaussianPolicy> policy_;
    std::unique_ptr<agent::CriticEnsemble> critics_;
    std::unique_ptr<model::EnsembleGaussianModel> model_;
    std::unique_ptr<agent::EntropyTemperature> temperature_;
    std::unique_ptr<rollouts::Dynamics> dynamics_;
    ad::AdamW actor_opt_, critic_opt_;
    agent::QBounds bounds_;
    buffers::TransitionBuffer replay_, model_buffer_;
    buffers::NormStats stats_;

    Rng env_rng_, act_rng_, model_rng_, dr_rng_, update_rng_;

    std::size_t env_steps_ = 0, episodes_ = 0, updates_ = 0, dropped_ = 0;
    std::size_t last_stop_epoch_ = 0;
    rollouts::GradientReport last_grad_;
    ModelActivity activity_;

    // Running means since the last metrics row.
    struct Window {
        std::size_t updates = 0, clipped_targets = 0, clipped_gradients = 0, masked = 0;
        double critic_loss = 0, actor_objective = 0, grad_norm = 0;
    } window_;

    std::vector<MetricsRow> metrics_;
    std::vector<UpdateRow> update_log_;
    TrainerHooks hooks_;
};

}  // namespace dhmbpo::algo

#pragma once

#include <map>
#include <string>
#include <vector>

#include "dhmbpo/agent/critics.hpp"
#include "dhmbpo/agent/policy.hpp"
#include "dhmbpo/model/ensemble_model.hpp"

namespace dhmbpo::algo {

struct Variant {
    std::size_t dr_horizon = 20;  // D
    std::size_t tr_horizon = 5;   // T

    bool uses_model() const { return dr_horizon > 0 || tr_horizon > 0; }
    std::string name() const;  // "20,5"
};

// Parses "D,T" with non-negative integers; throws ContractViolation otherwise.
Variant parse_variant(const std::string& text);

struct AlgoConfig {
    Variant variant;
    double gamma = 0.995;
    std::size_t seed_steps = 5000;  // environment (physics) steps of uniform actions
    std::size_t batch_size = 256;
    std::size_t utd = 1;
    std::size_t iterations_per_dr = 20;
    std::size_t dr_starts = 1024;
    double target_momentum = 0.995;
    double actor_lr = 3e-4, critic_lr = 3e-4, alpha_lr = 3e-4;
    double alpha_init = 0.1;
    std::size_t replay_capacity = 1'000'000;
    double q_bound_eta = 0.95;
    double grad_ceiling = 100;

    std::vector<std::size_t> actor_hidden{512, 512, 512};
    std::vector<std::size_t> critic_hidden{512, 512, 512};
    std::size_t critic_members = 5;
    double critic_dropout = 1e-4;
    model::ModelConfig model;

    std::size_t total_steps = 30000;      // environment steps
    std::size_t eval_interval = 1000;     // environment steps
    std::size_t eval_episodes = 10;
    std::map<std::string, double> task_overrides;

    // Applies one "section.key" = value setting; unknown keys throw.
    void set(const std::string& key, const std::string& value);
    // Flat key=value listing that set() accepts back.
    std::map<std::string, std::string> entries() const;
    void validate() const;
};

// Full-size settings.
AlgoConfig default_config();
// Scaled-down networks and model-fit budget for single-core desk runs.
AlgoConfig desk_config();
AlgoConfig preset(const std::string& name);

}  // namespace dhmbpo::algo

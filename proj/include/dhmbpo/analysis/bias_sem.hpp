#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dhmbpo/algo/trainer.hpp"
#include "dhmbpo/rollouts/lq.hpp"

namespace dhmbpo::analysis {

struct BiasSem {
    double bias = 0;
    double sem = 0;
};

// per_state[b] = g_tb. Bias = (1/B) sum_b |g_tb - gbar|^2,
// SEM = sqrt(sum_b |g_tb - g_t|^2 / (B (B - 1))) with g_t the mean over b.
BiasSem bias_sem(const std::vector<std::vector<double>>& per_state, std::span<const double> gbar);

struct BiasSemRecord {
    std::size_t horizon = 0;
    double bias = 0, sem = 0;
    std::size_t states = 0, rollouts = 0;
    std::string truth;  // "closed_form" or the reference horizon
};

// Gradient of the mean T-step value expansion over `rollouts` copies of one
// state, divided by the number of policy parameters.
std::vector<double> state_gradient(const rollouts::Dynamics& dynamics, agent::StochasticPolicy& policy,
                                   const rollouts::ValueFunction& critic, double alpha, double gamma,
                                   std::span<const double> state, std::size_t horizon, std::size_t rollouts,
                                   Rng& rng);

struct LqBiasSemConfig {
    // Closed loop a + b * gain = 0.8 with gamma 0.95, so rewards up to t = 9
    // still matter; with a faster-mixing system SEM flattens after t = 5.
    rollouts::LqSystem system{.a = 0.95, .b = 0.5, .noise_std = 0.3, .control_cost = 0.1, .gamma = 0.95};
    rollouts::LqPolicyParams policy{.gain = -0.3, .offset = 0.1, .log_std = -1.2};
    double critic_scale = 0.5;  // terminal critic beta * Q^pi
    double state_mean = 1.0, state_std = 0.3;
    std::vector<std::size_t> horizons{1, 3, 5, 7, 9};
    std::size_t states = 256, rollouts = 256;
    std::uint64_t seed = 0;
};

// Synthetic system: exact dynamics, a mis-scaled frozen analytic critic and
// gbar = mean_b of the closed-form grad V^pi(s_b) / 3.
std::vector<BiasSemRecord> lq_bias_sem(const LqBiasSemConfig& config);

struct ModelBiasSemConfig {
    std::vector<std::size_t> horizons{1, 3, 5, 7, 9};
    std::size_t states = 256, rollouts = 256;
    std::size_t truth_horizon = 9;
    std::uint64_t seed = 0;
};

// Frozen trainer (model, policy, critics); states from its replay buffer and
// gbar = g_{T*} computed on the same states.
std::vector<BiasSemRecord> model_bias_sem(algo::Trainer& trainer, const ModelBiasSemConfig& config);

void write_bias_sem_csv(const std::filesystem::path& path, const std::vector<BiasSemRecord>& records);

}  // namespace dhmbpo::analysis

#pragma once

#include <cstdint>
#include <vector>

#include "dhmbpo/agent/policy.hpp"
#include "dhmbpo/autodiff/tape.hpp"
#include "dhmbpo/buffers/buffer.hpp"
#include "dhmbpo/rollouts/interfaces.hpp"

namespace dhmbpo::rollouts {

struct DrReport {
    std::size_t starts = 0;
    std::size_t stored = 0;
    std::size_t truncated_branches = 0;  // stopped early by a non-finite prediction
};

// Gradient-free D-step rollouts from B states drawn uniformly from `replay`.
// Every generated transition is appended to `model_buffer`.
DrReport distribution_rollout(const Dynamics& dynamics, const agent::StochasticPolicy& policy,
                              const buffers::TransitionBuffer& replay, buffers::TransitionBuffer& model_buffer,
                              std::size_t starts, std::size_t horizon, Rng& rng);

// s_0..s_T, a_0..a_T, r_0..r_{T-1} and log-probs of the sampled actions.
struct Trajectory {
    std::vector<Tensor> states;     // T+1 entries [B,S]
    std::vector<Tensor> actions;    // T+1 entries [B,A]
    std::vector<Tensor> log_probs;  // T+1 entries [B]; entry 0 undefined when a_0 was given
    std::vector<Tensor> rewards;    // T entries [B]
    std::vector<std::uint8_t> valid;

    std::size_t horizon() const { return rewards.size(); }
    std::size_t batch() const { return valid.size(); }
    std::size_t masked() const;
};

// T-step rollout; differentiable when recorded. With `first_actions` the
// start action is the given one instead of a policy sample. Rows that turn
// non-finite are zeroed from that step on and flagged invalid.
Trajectory training_rollout(const Dynamics& dynamics, const agent::StochasticPolicy& policy,
                            const Tensor& start_states, std::size_t horizon, Rng& rng,
                            const Tensor* first_actions = nullptr);

struct MveValue {
    Tensor per_state;  // [B], zero on invalid rows
    Tensor objective;  // scalar mean over valid rows
    std::size_t valid = 0;
};

// sum_{t<T} g^t (r_t - alpha logp_t) + g^T (Q(s_T, a_T) - alpha logp_T).
MveValue mve_value(const Trajectory& traj, const ValueFunction& critic, double alpha, double gamma);

struct MveTarget {
    std::vector<double> values;  // [B]
    std::vector<std::uint8_t> valid;
    std::vector<double> terminal;  // clipped target critic values at s_T
};

// r_0 + sum_{1<=t<T} g^t (r_t - alpha logp_t) + g^T (Qbar(s_T, a_T) - alpha logp_T).
// Needs T >= 1 and a trajectory started from given actions. Never recorded.
MveTarget mve_q(const Trajectory& traj, const ValueFunction& critic, double alpha, double gamma, Rng& rng);

// r + g (1 - terminated) (Qbar(s', a') - alpha logp'), a' ~ pi(s').
MveTarget one_step_target(const buffers::Batch& batch, const agent::StochasticPolicy& policy,
                          const ValueFunction& critic, double alpha, double gamma, Rng& rng);

struct GradientReport {
    double norm = 0;  // before clipping
    bool clipped = false;
    bool finite = true;
};

// Backpropagates `objective` (recorded on `tape`) into the policy parameters
// and rescales the gradient to at most `ceiling` in norm. Non-finite
// gradients are zeroed and reported.
GradientReport value_gradient(ad::Tape& tape, const Tensor& objective, ad::ParameterSet& policy_params,
                              double ceiling);

}  // namespace dhmbpo::rollouts

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dhmbpo/core/transition.hpp"
#include "dhmbpo/envs/task.hpp"

namespace dhmbpo::envs {

struct StepResult {
    std::vector<double> next_state;  // observation
    double reward = 0;               // summed over repeated sub-steps
    bool terminated = false;
    bool truncated = false;
};

// Episode state machine around a Task: RK4 integration, action clipping,
// action repeat and the time limit.
class Environment {
public:
    explicit Environment(std::shared_ptr<const Task> task);

    const Task& task() const { return *task_; }
    const EnvSpec& spec() const { return task_->spec(); }

    std::vector<double> reset(std::uint64_t seed);
    // Starts an episode from a given physical state (Monte-Carlo probes).
    std::vector<double> reset_to(std::span<const double> physical_state);
    StepResult step(std::span<const double> action);

    std::vector<double> observation() const { return task_->observe(state_); }
    const std::vector<double>& physical_state() const { return state_; }
    std::size_t step_count() const { return steps_; }  // physics steps
    bool done() const { return done_; }
    // Set when integration produced a non-finite state; the episode is over.
    bool faulted() const { return faulted_; }

private:
    void rk4(std::span<const double> action);

    std::shared_ptr<const Task> task_;
    std::vector<double> state_;
    std::size_t steps_ = 0;
    bool done_ = true;
    bool faulted_ = false;
    std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

// Maps an observation to an action; the stream is for stochastic policies.
using Policy = std::function<std::vector<double>(std::span<const double> observation, Rng& rng)>;

struct EpisodeResult {
    double episode_return = 0;  // undiscounted
    std::vector<Transition> transitions;
};

// Runs one episode to termination or the time limit. Environment faults
// propagate as EnvironmentFault.
EpisodeResult run_episode(std::shared_ptr<const Task> task, const Policy& policy, std::uint64_t seed);

struct TestReturn {
    double mean = 0;
    double std = 0;  // population standard deviation
    std::vector<double> returns;
};

// Episode i uses seed mix_seed(seed, i); the policy should be deterministic.
TestReturn evaluate(std::shared_ptr<const Task> task, const Policy& policy, std::size_t episodes,
                    std::uint64_t seed);

TestReturn summarize_returns(std::vector<double> returns);

}  // namespace dhmbpo::envs

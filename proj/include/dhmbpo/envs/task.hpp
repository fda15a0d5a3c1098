#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dhmbpo/core/rng.hpp"

namespace dhmbpo::envs {

struct EnvSpec {
    std::string id;
    std::size_t state_dim = 0;        // physical state
    std::size_t observation_dim = 0;  // what the agent sees
    std::size_t action_dim = 0;
    std::vector<double> action_low, action_high;
    double dt = 0;                      // seconds per physics step
    std::size_t episode_length = 0;     // physics steps
    std::size_t action_repeat = 1;
    double reward_low = 0, reward_high = 0;  // per physics step
    std::string initial_distribution;

    std::size_t agent_steps() const { return episode_length / action_repeat; }
    void validate() const;
};

// Continuous-time dynamics plus reward. Implementations are stateless apart
// from their physical constants.
class Task {
public:
    virtual ~Task() = default;

    virtual const EnvSpec& spec() const = 0;
    virtual std::vector<double> sample_initial_state(Rng& rng) const = 0;
    // ds/dt at (state, action); action already clipped.
    virtual void derivative(std::span<const double> state, std::span<const double> action,
                            std::span<double> out) const = 0;
    // Reward for one physics step that ended in `state` under `action`.
    virtual double reward(std::span<const double> state, std::span<const double> action) const = 0;
    virtual bool terminal(std::span<const double>) const { return false; }

    virtual std::vector<double> observe(std::span<const double> state) const;
    // Inverse of observe for states reachable by the dynamics.
    virtual std::vector<double> state_from_observation(std::span<const double> observation) const;

    // Named physical constants, exposed to the config file.
    virtual std::map<std::string, double> constants() const = 0;
};

using TaskFactory = std::function<std::shared_ptr<Task>(const std::map<std::string, double>& overrides)>;

// Builds a registered task; unknown ids or constant names are contract violations.
std::shared_ptr<Task> make_task(const std::string& id, const std::map<std::string, double>& overrides = {});
std::vector<std::string> task_ids();
void register_task(const std::string& id, TaskFactory factory);

// Applies `overrides` onto `constants`, rejecting unknown keys.
void apply_overrides(std::map<std::string, double>& constants, const std::map<std::string, double>& overrides,
                     const std::string& task_id);

}  // namespace dhmbpo::envs

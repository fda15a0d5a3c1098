#include "dhmbpo/envs/environment.hpp"

#include <algorithm>
#include <cmath>

#include "dhmbpo/core/error.hpp"

namespace dhmbpo::envs {

Environment::Environment(std::shared_ptr<const Task> task) : task_(std::move(task)) {
    require(task_ != nullptr, "Environment: null task");
    const std::size_t n = spec().state_dim;
    k1_.resize(n);
    k2_.resize(n);
    k3_.resize(n);
    k4_.resize(n);
    tmp_.resize(n);
}

std::vector<double> Environment::reset(std::uint64_t seed) {
    Rng rng(seed);
    return reset_to(task_->sample_initial_state(rng));
}

std::vector<double> Environment::reset_to(std::span<const double> physical_state) {
    require(physical_state.size() == spec().state_dim, "Environment::reset_to: state dimension");
    state_.assign(physical_state.begin(), physical_state.end());
    steps_ = 0;
    done_ = false;
    faulted_ = false;
    return observation();
}

void Environment::rk4(std::span<const double> a) {
    const std::size_t n = state_.size();
    const double h = spec().dt;
    task_->derivative(state_, a, k1_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = state_[i] + 0.5 * h * k1_[i];
    task_->derivative(tmp_, a, k2_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = state_[i] + 0.5 * h * k2_[i];
    task_->derivative(tmp_, a, k3_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = state_[i] + h * k3_[i];
    task_->derivative(tmp_, a, k4_);
    for (std::size_t i = 0; i < n; ++i) state_[i] += h / 6 * (k1_[i] + 2 * k2_[i] + 2 * k3_[i] + k4_[i]);
}

StepResult Environment::step(std::span<const double> action) {
    const EnvSpec& s = spec();
    require(!done_, "Environment::step: episode is over; call reset");
    require(action.size() == s.action_dim, "Environment::step: action dimension");
    std::vector<double> a(action.begin(), action.end());
    for (std::size_t i = 0; i < a.size(); ++i) {
        require(!std::isnan(a[i]), "Environment::step: NaN action");
        a[i] = std::clamp(a[i], s.action_low[i], s.action_high[i]);
    }

    StepResult result;
    for (std::size_t k = 0; k < s.action_repeat; ++k) {
        rk4(a);
        ++steps_;
        for (double v : state_)
            if (!std::isfinite(v)) {
                done_ = true;
                faulted_ = true;
                throw EnvironmentFault("task '" + s.id + "': non-finite state at physics step " +
                                       std::to_string(steps_));
            }
        result.reward += task_->reward(state_, a);
        if (task_->terminal(state_)) {
            result.terminated = true;
            break;
        }
    }
    result.truncated = !result.terminated && steps_ >= s.episode_length;
    done_ = result.terminated || result.truncated;
    result.next_state = observation();
    return result;
}

EpisodeResult run_episode(std::shared_ptr<const Task> task, const Policy& policy, std::uint64_t seed) {
    Environment env(std::move(task));
    Rng policy_rng(mix_seed(seed, 1));
    EpisodeResult out;
    std::vector<double> obs = env.reset(seed);
    while (!env.done()) {
        std::vector<double> action = policy(obs, policy_rng);
        StepResult r = env.step(action);
        out.episode_return += r.reward;
        out.transitions.push_back({obs, action, r.reward, r.next_state, r.terminated, r.truncated});
        obs = std::move(r.next_state);
    }
    return out;
}

TestReturn summarize_returns(std::vector<double> returns) {
    TestReturn t;
    t.returns = std::move(returns);
    if (t.returns.empty()) return t;
    double sum = 0;
    for (double r : t.returns) sum += r;
    t.mean = sum / t.returns.size();
    double sq = 0;
    for (double r : t.returns) sq += (r - t.mean) * (r - t.mean);
    t.std = std::sqrt(sq / t.returns.size());
    return t;
}

TestReturn evaluate(std::shared_ptr<const Task> task, const Policy& policy, std::size_t episodes,
                    std::uint64_t seed) {
    require(episodes > 0, "evaluate: need at least one episode");
    std::vector<double> returns;
    for (std::size_t i = 0; i < episodes; ++i)
        returns.push_back(run_episode(task, policy, mix_seed(seed, i)).episode_return);
    return summarize_returns(std::move(returns));
}

}  // namespace dhmbpo::envs

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dhmbpo/core/error.hpp"
#include "dhmbpo/envs/environment.hpp"

using namespace dhmbpo;
using namespace dhmbpo::envs;

namespace {

// Reward 1 per physics step, optional termination after a fixed step count.
class CountingTask : public Task {
public:
    CountingTask(std::size_t length, std::size_t repeat, std::size_t terminate_at = 0) : terminate_at_(terminate_at) {
        spec_.id = "counting";
        spec_.state_dim = spec_.observation_dim = spec_.action_dim = 1;
        spec_.action_low = {-1};
        spec_.action_high = {1};
        spec_.dt = 1;
        spec_.episode_length = length;
        spec_.action_repeat = repeat;
        spec_.reward_low = spec_.reward_high = 1;
    }
    const EnvSpec& spec() const override { return spec_; }
    std::vector<double> sample_initial_state(Rng&) const override { return {0}; }
    void derivative(std::span<const double>, std::span<const double>, std::span<double> out) const override {
        out[0] = 1;  // state counts elapsed time
    }
    double reward(std::span<const double>, std::span<const double>) const override { return 1; }
    bool terminal(std::span<const double> s) const override {
        return terminate_at_ > 0 && s[0] >= static_cast<double>(terminate_at_) - 1e-9;
    }
    std::map<std::string, double> constants() const override { return {}; }

private:
    EnvSpec spec_;
    std::size_t terminate_at_;
};

class BlowupTask : public CountingTask {
public:
    BlowupTask() : CountingTask(10, 1) {}
    void derivative(std::span<const double> s, std::span<const double>, std::span<double> out) const override {
        out[0] = s[0] == 0 ? 1e308 : s[0] * 1e308;
    }
};

Policy zero_policy(std::size_t dim) {
    return [dim](std::span<const double>, Rng&) { return std::vector<double>(dim, 0.0); };
}

Policy random_policy(const EnvSpec& spec) {
    return [spec](std::span<const double>, Rng& rng) {
        std::vector<double> a(spec.action_dim);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(spec.action_low[i], spec.action_high[i]);
        return a;
    };
}

}  // namespace

TEST(Registry, KnownTasksBuildAndValidate) {
    for (const auto& id : task_ids()) {
        auto task = make_task(id);
        EXPECT_EQ(task->spec().id, id);
        EXPECT_EQ(task->spec().episode_length % task->spec().action_repeat, 0u);
    }
    EXPECT_THROW(make_task("no-such-task"), ContractViolation);
    EXPECT_THROW(make_task("pendulum-swingup", {{"no_such_constant", 1}}), ContractViolation);
}

TEST(Registry, ConstantsOverridable) {
    auto task = make_task("pendulum-swingup", {{"max_torque", 3}, {"episode_length", 200}});
    EXPECT_EQ(task->spec().action_high[0], 3);
    EXPECT_EQ(task->spec().episode_length, 200u);
    EXPECT_EQ(task->constants().at("max_torque"), 3);
    EXPECT_THROW(make_task("pendulum-swingup", {{"episode_length", 401}}), ContractViolation);
}

TEST(Reset, DeterministicUnderSeed) {
    auto task = make_task("pendulum-swingup");
    Environment a(task), b(task);
    EXPECT_EQ(a.reset(7), b.reset(7));
    EXPECT_EQ(a.step_count(), 0u);
    EXPECT_NE(a.reset(8), b.reset(7));
}

TEST(Reset, PendulumInitialStatesWithinBounds) {
    auto task = make_task("pendulum-swingup");
    Environment env(task);
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        env.reset(seed);
        const auto& s = env.physical_state();
        ASSERT_GE(s[0], -std::numbers::pi);
        ASSERT_LE(s[0], std::numbers::pi);
        ASSERT_GE(s[1], -1.0);
        ASSERT_LE(s[1], 1.0);
    }
}

TEST(Step, UprightEquilibriumIsFixedPoint) {
    auto task = make_task("pendulum-swingup");
    Environment env(task);
    env.reset_to(std::vector<double>{0, 0});
    auto r = env.step(std::vector<double>{0});
    EXPECT_NEAR(env.physical_state()[0], 0, 1e-9);
    EXPECT_NEAR(env.physical_state()[1], 0, 1e-9);
    EXPECT_NEAR(r.next_state[0], 1, 1e-9);
}

TEST(Step, OutOfBoundsActionIsClipped) {
    auto task = make_task("pendulum-swingup");
    Environment a(task), b(task);
    a.reset(3);
    b.reset(3);
    auto ra = a.step(std::vector<double>{50});
    auto rb = b.step(std::vector<double>{2});
    EXPECT_EQ(ra.next_state, rb.next_state);
    EXPECT_EQ(ra.reward, rb.reward);
}

TEST(Step, UndampedPendulumConservesEnergy) {
    auto task = make_task("pendulum-swingup", {{"damping", 0}, {"action_repeat", 1}});
    Environment env(task);
    const double m = 1, l = 1, g = 9.81;
    auto energy = [&](const std::vector<double>& s) { return 0.5 * m * l * l * s[1] * s[1] + m * g * l * std::cos(s[0]); };
    env.reset_to(std::vector<double>{2.0, 0.5});
    const double e0 = energy(env.physical_state());
    for (int i = 0; i < 200; ++i) env.step(std::vector<double>{0});
    EXPECT_LE(std::abs(energy(env.physical_state()) - e0) / std::abs(e0), 1e-6);
}

TEST(Step, RepeatedCallsAgreeBitwise) {
    for (const auto& id : task_ids()) {
        auto task = make_task(id);
        Environment a(task), b(task);
        a.reset(11);
        b.reset(11);
        Rng ra(1), rb(1);
        auto policy = random_policy(task->spec());
        for (int i = 0; i < 50; ++i) {
            auto sa = a.step(policy({}, ra));
            auto sb = b.step(policy({}, rb));
            ASSERT_EQ(sa.next_state, sb.next_state);
            ASSERT_EQ(sa.reward, sb.reward);
        }
    }
}

TEST(Step, NonFiniteStateIsEnvironmentFault) {
    Environment env(std::make_shared<BlowupTask>());
    env.reset(0);
    EXPECT_THROW(
        {
            for (int i = 0; i < 10; ++i) env.step(std::vector<double>{0});
        },
        EnvironmentFault);
    EXPECT_TRUE(env.faulted());
    EXPECT_TRUE(env.done());
}

TEST(Step, TruncationNeverSetsTerminated) {
    auto task = make_task("pendulum-swingup");
    Environment env(task);
    env.reset(0);
    StepResult last;
    while (!env.done()) {
        last = env.step(std::vector<double>{0});
        if (!env.done()) {
            EXPECT_FALSE(last.truncated);
        }
        EXPECT_FALSE(last.terminated);
    }
    EXPECT_TRUE(last.truncated);
    EXPECT_EQ(env.step_count(), task->spec().episode_length);
}

TEST(Rewards, WithinDocumentedRange) {
    for (const auto& id : task_ids()) {
        auto task = make_task(id);
        const EnvSpec& spec = task->spec();
        Environment env(task);
        auto policy = random_policy(spec);
        Rng rng(5);
        std::size_t steps = 0;
        for (std::uint64_t ep = 0; steps < 1'000'000; ++ep) {
            env.reset(ep);
            while (!env.done()) {
                auto r = env.step(policy({}, rng));
                steps += spec.action_repeat;
                const double per_step = r.reward / spec.action_repeat;
                ASSERT_GE(per_step, spec.reward_low - 1e-12) << id;
                ASSERT_LE(per_step, spec.reward_high + 1e-12) << id;
            }
        }
    }
}

TEST(Observation, StateRoundTrip) {
    for (const auto& id : task_ids()) {
        auto task = make_task(id);
        Environment env(task);
        env.reset(2);
        for (int i = 0; i < 20; ++i) env.step(std::vector<double>(task->spec().action_dim, 0.5));
        auto s = task->state_from_observation(env.observation());
        auto o = task->observe(s);
        auto expected = env.observation();
        for (std::size_t k = 0; k < o.size(); ++k) EXPECT_NEAR(o[k], expected[k], 1e-12) << id;
    }
}

TEST(RunEpisode, ReturnSumsRepeatedSubsteps) {
    auto task = std::make_shared<CountingTask>(100, 2);
    auto result = run_episode(task, zero_policy(1), 0);
    EXPECT_EQ(result.transitions.size(), 50u);
    EXPECT_DOUBLE_EQ(result.episode_return, 100.0);
    EXPECT_TRUE(result.transitions.back().truncated);
}

TEST(RunEpisode, TerminationShortensEpisode) {
    auto task = std::make_shared<CountingTask>(100, 1, 7);
    auto result = run_episode(task, zero_policy(1), 0);
    EXPECT_EQ(result.transitions.size(), 7u);
    EXPECT_TRUE(result.transitions.back().terminated);
    EXPECT_FALSE(result.transitions.back().truncated);
}

TEST(RunEpisode, DeterministicUnderSeed) {
    auto task = make_task("cartpole-swingup");
    auto a = run_episode(task, random_policy(task->spec()), 4);
    auto b = run_episode(task, random_policy(task->spec()), 4);
    ASSERT_EQ(a.transitions.size(), b.transitions.size());
    for (std::size_t i = 0; i < a.transitions.size(); ++i) {
        EXPECT_EQ(a.transitions[i].state, b.transitions[i].state);
        EXPECT_EQ(a.transitions[i].action, b.transitions[i].action);
        EXPECT_EQ(a.transitions[i].reward, b.transitions[i].reward);
    }
}

TEST(Evaluate, Statistics) {
    auto task = std::make_shared<CountingTask>(10, 1);
    auto one = evaluate(task, zero_policy(1), 1, 0);
    EXPECT_EQ(one.mean, one.returns[0]);
    auto many = evaluate(task, zero_policy(1), 5, 0);
    EXPECT_EQ(many.std, 0.0);
    auto s = summarize_returns({1, 2, 3});
    EXPECT_DOUBLE_EQ(s.mean, 2.0);
}

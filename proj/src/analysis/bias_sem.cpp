#include "dhmbpo/analysis/bias_sem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dhmbpo/autodiff/tape.hpp"
#include "dhmbpo/core/error.hpp"

namespace dhmbpo::analysis {

using ad::Tensor;

BiasSem bias_sem(const std::vector<std::vector<double>>& per_state, std::span<const double> gbar) {
    const std::size_t B = per_state.size();
    require(B >= 2, "bias_sem: the standard error needs at least two states");
    const std::size_t P = gbar.size();
    std::vector<double> g_t(P, 0.0);
    for (const auto& g : per_state) {
        require(g.size() == P, "bias_sem: gradient dimension mismatch");
        for (std::size_t p = 0; p < P; ++p) g_t[p] += g[p];
    }
    for (auto& v : g_t) v /= static_cast<double>(B);
    double bias = 0, spread = 0;
    for (const auto& g : per_state)
        for (std::size_t p = 0; p < P; ++p) {
            bias += (g[p] - gbar[p]) * (g[p] - gbar[p]);
            spread += (g[p] - g_t[p]) * (g[p] - g_t[p]);
        }
    const double b = static_cast<double>(B);
    return {bias / b, std::sqrt(spread / (b * (b - 1)))};
}

std::vector<double> state_gradient(const rollouts::Dynamics& dynamics, agent::StochasticPolicy& policy,
                                   const rollouts::ValueFunction& critic, double alpha, double gamma,
                                   std::span<const double> state, std::size_t horizon, std::size_t rollouts,
                                   Rng& rng) {
    require(rollouts >= 2, "state_gradient: need at least two rollouts per state");
    const std::size_t S = state.size();
    std::vector<ad::Scalar> rows(rollouts * S);
    for (std::size_t r = 0; r < rollouts; ++r) std::copy(state.begin(), state.end(), rows.begin() + r * S);
    const Tensor s = Tensor::from_values({rollouts, S}, std::move(rows));

    auto& params = policy.parameters();
    params.zero_grad();
    ad::Tape tape;
    Tensor objective;
    {
        ad::TapeScope scope(tape);
        const auto traj = rollouts::training_rollout(dynamics, policy, s, horizon, rng);
        objective = rollouts::mve_value(traj, critic, alpha, gamma).objective;
    }
    if (objective.requires_grad()) tape.backward(objective);
    const double scale = 1.0 / static_cast<double>(params.scalar_count());
    std::vector<double> g;
    g.reserve(params.scalar_count());
    for (const auto& e : params.entries()) {
        if (e.tensor.has_grad())
            for (double v : e.tensor.grad()) g.push_back(v * scale);
        else
            g.insert(g.end(), e.tensor.numel(), 0.0);
    }
    params.zero_grad();
    return g;
}

std::vector<BiasSemRecord> lq_bias_sem(const LqBiasSemConfig& c) {
    require(c.rollouts >= 2, "lq_bias_sem: R < 2 leaves the rollout average undefined");
    require(c.states >= 2, "lq_bias_sem: need at least two states");
    Rng rng(c.seed);
    std::vector<double> states(c.states);
    for (auto& s : states) s = c.state_mean + c.state_std * rng.normal();

    auto policy = rollouts::LinearGaussianPolicy::scalar(c.policy);
    const rollouts::LqDynamics dyn(c.system);
    const rollouts::LqCritic critic(c.system, c.policy, c.critic_scale);
    const double P = static_cast<double>(policy.parameters().scalar_count());

    std::vector<double> gbar(3, 0.0);
    for (double s : states) {
        const auto g = rollouts::lq_value_gradient(c.system, c.policy, s);
        for (std::size_t p = 0; p < 3; ++p) gbar[p] += g[p] / P / static_cast<double>(c.states);
    }

    std::vector<BiasSemRecord> out;
    for (std::size_t t : c.horizons) {
        std::vector<std::vector<double>> per_state;
        for (double s : states) {
            const double row[1] = {s};
            per_state.push_back(state_gradient(dyn, policy, critic, 0.0, c.system.gamma, row, t, c.rollouts, rng));
        }
        const auto bs = bias_sem(per_state, gbar);
        out.push_back({t, bs.bias, bs.sem, c.states, c.rollouts, "closed_form"});
    }
    return out;
}

std::vector<BiasSemRecord> model_bias_sem(algo::Trainer& trainer, const ModelBiasSemConfig& c) {
    require(c.rollouts >= 2, "model_bias_sem: R < 2 leaves the rollout average undefined");
    require(trainer.model() != nullptr && trainer.model()->trained(), "model_bias_sem: needs a trained model");
    Rng rng(c.seed);
    const auto starts = trainer.replay().sample_uniform(c.states, rng);
    const rollouts::CriticValue value(trainer.critics(), trainer.bounds());
    const double alpha = trainer.temperature().alpha(), gamma = trainer.config().gamma;
    ad::FrozenScope freeze(trainer.critics().parameters());

    auto grads_at = [&](std::size_t t) {
        std::vector<std::vector<double>> per_state;
        for (std::size_t b = 0; b < starts.size; ++b)
            per_state.push_back(state_gradient(trainer.dynamics(), trainer.policy(), value, alpha, gamma,
                                               starts.state(b), t, c.rollouts, rng));
        return per_state;
    };
    const auto truth = grads_at(c.truth_horizon);
    std::vector<double> gbar(truth.front().size(), 0.0);
    for (const auto& g : truth)
        for (std::size_t p = 0; p < g.size(); ++p) gbar[p] += g[p] / static_cast<double>(truth.size());

    std::vector<BiasSemRecord> out;
    for (std::size_t t : c.horizons) {
        const auto bs = bias_sem(t == c.truth_horizon ? truth : grads_at(t), gbar);
        out.push_back({t, bs.bias, bs.sem, c.states, c.rollouts, std::to_string(c.truth_horizon)});
    }
    return out;
}

void write_bias_sem_csv(const std::filesystem::path& path, const std::vector<BiasSemRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "horizon,bias,sem,states,rollouts,truth\n";
    char buf[200];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%zu,%zu,%s\n", r.horizon, r.bias, r.sem, r.states,
                      r.rollouts, r.truth.c_str());
        out << buf;
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace dhmbpo::analysis

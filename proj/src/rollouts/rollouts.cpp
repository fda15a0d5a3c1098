#include "dhmbpo/rollouts/rollouts.hpp"

#include <cmath>

#include "dhmbpo/core/error.hpp"

namespace dhmbpo::rollouts {

namespace {

std::vector<double> to_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

bool row_finite(std::span<const Scalar> v, std::size_t row, std::size_t width) {
    for (std::size_t j = 0; j < width; ++j)
        if (!std::isfinite(v[row * width + j])) return false;
    return true;
}

}  // namespace

DrReport distribution_rollout(const Dynamics& dynamics, const agent::StochasticPolicy& policy,
                              const buffers::TransitionBuffer& replay, buffers::TransitionBuffer& model_buffer,
                              std::size_t starts, std::size_t horizon, Rng& rng) {
    DrReport report;
    if (horizon == 0 || starts == 0) return report;
    const std::size_t S = dynamics.state_dim(), A = policy.action_dim();
    require(replay.state_dim() == S && model_buffer.state_dim() == S && model_buffer.action_dim() == A,
            "distribution_rollout: buffer dimensions do not match the model");
    ad::NoGradScope no_grad;
    const auto start = replay.sample_uniform(starts, rng);
    report.starts = starts;
    Tensor states = Tensor::from_values({starts, S}, start.states);
    std::vector<std::uint8_t> alive(starts, 1);
    for (std::size_t d = 0; d < horizon; ++d) {
        const Tensor actions = policy.sample(states, rng).actions;
        const ModelStep step = dynamics.step(states, actions, rng);
        const auto sv = states.values(), av = actions.values(), nv = step.next_states.values();
        const auto rv = step.rewards.values();
        for (std::size_t b = 0; b < starts; ++b) {
            if (!alive[b]) continue;
            if (!step.finite[b] || !row_finite(av, b, A)) {
                alive[b] = 0;
                ++report.truncated_branches;
                continue;
            }
            Transition t;
            t.state.assign(sv.begin() + b * S, sv.begin() + (b + 1) * S);
            t.action.assign(av.begin() + b * A, av.begin() + (b + 1) * A);
            t.reward = rv[b];
            t.next_state.assign(nv.begin() + b * S, nv.begin() + (b + 1) * S);
            t.terminated = false;
            t.truncated = d + 1 == horizon;
            model_buffer.push(t);
            ++report.stored;
        }
        // Dead branches keep a finite placeholder so the batch stays well formed.
        std::vector<Scalar> next(nv.begin(), nv.end());
        for (std::size_t b = 0; b < starts; ++b)
            if (!alive[b]) std::copy_n(sv.begin() + b * S, S, next.begin() + b * S);
        states = Tensor::from_values({starts, S}, std::move(next));
    }
    return report;
}

std::size_t Trajectory::masked() const {
    std::size_t n = 0;
    for (auto v : valid) n += v == 0;
    return n;
}

Trajectory training_rollout(const Dynamics& dynamics, const agent::StochasticPolicy& policy,
                            const Tensor& start_states, std::size_t horizon, Rng& rng, const Tensor* first_actions) {
    const std::size_t S = dynamics.state_dim();
    require(start_states.rank() == 2 && start_states.dim(1) == S, "training_rollout: start states must be [B,S]");
    const std::size_t B = start_states.dim(0);
    Trajectory traj;
    traj.valid.assign(B, 1);
    traj.states.push_back(start_states);
    for (std::size_t t = 0; t <= horizon; ++t) {
        const Tensor& s = traj.states.back();
        if (t == 0 && first_actions) {
            require(first_actions->shape() == ad::Shape{B, policy.action_dim()},
                    "training_rollout: first actions must be [B,A]");
            traj.actions.push_back(*first_actions);
            traj.log_probs.emplace_back();
        } else {
            auto out = policy.sample(s, rng);
            traj.actions.push_back(out.actions);
            traj.log_probs.push_back(out.log_probs);
        }
        if (t == horizon) break;
        ModelStep step = dynamics.step(s, traj.actions.back(), rng);
        bool any_bad = false;
        for (std::size_t b = 0; b < B; ++b) {
            if (!step.finite[b]) traj.valid[b] = 0;
            any_bad = any_bad || !traj.valid[b];
        }
        if (any_bad) {
            step.next_states = ad::mask_rows(step.next_states, traj.valid);
            step.rewards = ad::mask_rows(step.rewards, traj.valid);
        }
        traj.rewards.push_back(step.rewards);
        traj.states.push_back(step.next_states);
    }
    return traj;
}

MveValue mve_value(const Trajectory& traj, const ValueFunction& critic, double alpha, double gamma) {
    require(traj.log_probs.front().defined(), "mve_value: the start action must be sampled from the policy");
    const std::size_t T = traj.horizon();
    double discount = 1;
    Tensor total;
    for (std::size_t t = 0; t < T; ++t) {
        const Tensor term = ad::scale(traj.rewards[t] - ad::scale(traj.log_probs[t], alpha), discount);
        total = total.defined() ? total + term : term;
        discount *= gamma;
    }
    const Tensor terminal = critic.q(traj.states[T], traj.actions[T]) - ad::scale(traj.log_probs[T], alpha);
    const Tensor tail = ad::scale(terminal, discount);
    total = total.defined() ? total + tail : tail;

    MveValue out;
    for (auto v : traj.valid) out.valid += v;
    out.per_state = out.valid == traj.batch() ? total : ad::mask_rows(total, traj.valid);
    out.objective = out.valid > 0 ? ad::scale(ad::sum(out.per_state), 1.0 / static_cast<double>(out.valid))
                                  : Tensor::scalar(0);
    return out;
}

MveTarget mve_q(const Trajectory& traj, const ValueFunction& critic, double alpha, double gamma, Rng& rng) {
    const std::size_t T = traj.horizon();
    require(T >= 1, "mve_q: needs at least one model step (use one_step_target for T = 0)");
    ad::NoGradScope no_grad;
    const std::size_t B = traj.batch();
    MveTarget out;
    out.valid = traj.valid;
    out.values = to_vector(traj.rewards[0]);
    double discount = gamma;
    for (std::size_t t = 1; t < T; ++t) {
        const auto r = traj.rewards[t].values(), lp = traj.log_probs[t].values();
        for (std::size_t b = 0; b < B; ++b) out.values[b] += discount * (r[b] - alpha * lp[b]);
        discount *= gamma;
    }
    out.terminal = critic.target_q(traj.states[T].detach(), traj.actions[T].detach(), rng);
    const auto lp = traj.log_probs[T].values();
    for (std::size_t b = 0; b < B; ++b) {
        out.values[b] += discount * (out.terminal[b] - alpha * lp[b]);
        if (!out.valid[b] || !std::isfinite(out.values[b])) {
            out.valid[b] = 0;
            out.values[b] = 0;
        }
    }
    return out;
}

MveTarget one_step_target(const buffers::Batch& batch, const agent::StochasticPolicy& policy,
                          const ValueFunction& critic, double alpha, double gamma, Rng& rng) {
    ad::NoGradScope no_grad;
    const std::size_t B = batch.size;
    const Tensor next = Tensor::from_values({B, batch.state_dim}, batch.next_states);
    const auto out_pi = policy.sample(next, rng);
    MveTarget out;
    out.terminal = critic.target_q(next, out_pi.actions, rng);
    out.values.resize(B);
    out.valid.assign(B, 1);
    const auto lp = out_pi.log_probs.values();
    for (std::size_t b = 0; b < B; ++b) {
        const double cont = batch.terminated[b] ? 0.0 : 1.0;
        out.values[b] = batch.rewards[b] + gamma * cont * (out.terminal[b] - alpha * lp[b]);
    }
    return out;
}

GradientReport value_gradient(ad::Tape& tape, const Tensor& objective, ad::ParameterSet& policy_params,
                              double ceiling) {
    require(ceiling > 0, "value_gradient: ceiling must be positive");
    GradientReport report;
    if (objective.requires_grad()) tape.backward(objective);
    report.norm = policy_params.grad_norm();
    if (!std::isfinite(report.norm)) {
        report.finite = false;
        policy_params.zero_grad();
        return report;
    }
    if (report.norm > ceiling) {
        policy_params.scale_grad(static_cast<Scalar>(ceiling / report.norm));
        report.clipped = true;
    }
    return report;
}

}  // namespace dhmbpo::rollouts

#include "dhmbpo/analysis/rmedse.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "dhmbpo/analysis/stats.hpp"
#include "dhmbpo/autodiff/tape.hpp"
#include "dhmbpo/core/error.hpp"

namespace dhmbpo::analysis {

using ad::Tensor;

RmedseValue rmedse(std::span<const double> estimates, std::span<const double> truth, double guard) {
    require(estimates.size() == truth.size(), "rmedse: size mismatch");
    RmedseValue out;
    std::vector<double> sq;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!(std::abs(truth[i]) >= guard)) {
            ++out.excluded;
            continue;
        }
        const double rel = (truth[i] - estimates[i]) / truth[i];
        sq.push_back(rel * rel);
    }
    if (out.excluded > 0)
        spdlog::warn("rmedse: {} probe(s) excluded with |Q_g| below {}", out.excluded, guard);
    require(!sq.empty(), "rmedse: every probe was excluded by the division guard");
    out.used = sq.size();
    out.error = std::sqrt(median(sq));
    return out;
}

std::vector<double> monte_carlo_q(const algo::Trainer& trainer, const buffers::Batch& pairs, std::size_t rollouts,
                                  std::size_t horizon, std::uint64_t seed) {
    require(rollouts > 0 && horizon > 0, "monte_carlo_q: need rollouts and a horizon");
    const auto& sp = trainer.spec();
    auto overrides = trainer.config().task_overrides;
    overrides["episode_length"] = static_cast<double>(horizon * sp.action_repeat);
    const std::shared_ptr<const envs::Task> task = envs::make_task(trainer.task_id(), overrides);
    const double gamma = trainer.config().gamma;
    const double alpha = trainer.temperature().alpha();
    const auto& policy = trainer.policy();
    const std::size_t S = sp.observation_dim, A = sp.action_dim;

    ad::NoGradScope no_grad;
    Rng rng(seed);
    std::vector<double> out(pairs.size);
    for (std::size_t i = 0; i < pairs.size; ++i) {
        const auto physical = task->state_from_observation(pairs.state(i));
        std::vector<envs::Environment> envs(rollouts, envs::Environment(task));
        std::vector<double> returns(rollouts, 0.0);
        std::vector<std::uint8_t> alive(rollouts, 1);
        std::vector<double> obs(rollouts * S);
        for (std::size_t r = 0; r < rollouts; ++r) {
            envs[r].reset_to(physical);
            const auto res = envs[r].step(pairs.action(i));
            returns[r] = res.reward;
            alive[r] = !res.terminated;
            std::copy(res.next_state.begin(), res.next_state.end(), obs.begin() + r * S);
        }
        double discount = 1;
        for (std::size_t t = 1; t < horizon; ++t) {
            discount *= gamma;
            const auto sample = policy.sample(Tensor::from_values({rollouts, S}, obs), rng);
            const auto actions = sample.actions.values();
            const auto lp = sample.log_probs.values();
            bool any = false;
            for (std::size_t r = 0; r < rollouts; ++r) {
                if (!alive[r]) continue;
                const auto res = envs[r].step(actions.subspan(r * A, A));
                returns[r] += discount * (res.reward - alpha * lp[r]);
                alive[r] = !res.terminated;
                any = any || alive[r];
                std::copy(res.next_state.begin(), res.next_state.end(), obs.begin() + r * S);
            }
            if (!any) break;
        }
        out[i] = mean(returns);
    }
    return out;
}

ProbeSet make_probes(const algo::Trainer& trainer, std::size_t probes, std::size_t rollouts, std::size_t horizon,
                     std::uint64_t seed) {
    Rng rng(mix_seed(seed, 1));
    ProbeSet set;
    set.pairs = trainer.replay().sample_uniform(probes, rng);
    set.truth = monte_carlo_q(trainer, set.pairs, rollouts, horizon, mix_seed(seed, 2));
    set.rollouts = rollouts;
    set.horizon = horizon;
    return set;
}

std::vector<RmedseRecord> critic_learning_curve(algo::Trainer& trainer, const ProbeSet& probes, bool with_dr,
                                                std::uint64_t seed, const CriticLearningConfig& config) {
    require(config.eval_every > 0, "critic_learning_curve: eval_every must be positive");
    require(!with_dr || (trainer.model() != nullptr && trainer.config().variant.dr_horizon > 0),
            "critic_learning_curve: DR needs the learned model and D > 0");
    trainer.reset_critics(seed);
    const auto source = with_dr ? buffers::Provenance::model : buffers::Provenance::environment;
    const std::size_t refresh = trainer.config().iterations_per_dr;

    std::vector<RmedseRecord> out;
    auto record = [&](std::size_t i) {
        Rng rng(config.estimate_seed);
        const auto est = trainer.mve_estimate(probes.pairs, rng);
        const auto e = rmedse(est.values, probes.truth);
        out.push_back({seed, with_dr, i, e.error, e.used, e.excluded});
    };
    record(0);
    for (std::size_t i = 0; i < config.iterations; ++i) {
        if (with_dr && i % refresh == 0) trainer.refresh_model_buffer();
        trainer.critic_update(trainer.sample_batch(source, trainer.config().batch_size));
        if ((i + 1) % config.eval_every == 0) record(i + 1);
    }
    return out;
}

void write_rmedse_csv(const std::filesystem::path& path, const std::vector<RmedseRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "seed,with_dr,iteration,error,used,excluded\n";
    char buf[160];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%llu,%d,%zu,%.17g,%zu,%zu\n", static_cast<unsigned long long>(r.seed),
                      r.with_dr ? 1 : 0, r.iteration, r.error, r.used, r.excluded);
        out << buf;
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace dhmbpo::analysis

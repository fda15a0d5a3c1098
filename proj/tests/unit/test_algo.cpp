#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "dhmbpo/algo/trainer.hpp"
#include "dhmbpo/autodiff/ops.hpp"
#include "dhmbpo/core/error.hpp"

using namespace dhmbpo;
using namespace dhmbpo::algo;

namespace {

// Pendulum episodes of 40 physics steps (20 agent steps) and very small networks.
AlgoConfig tiny(const std::string& variant) {
    AlgoConfig c;
    c.variant = parse_variant(variant);
    c.actor_hidden = {16};
    c.critic_hidden = {16};
    c.critic_members = 3;
    c.model.members = 3;
    c.model.hidden = {16};
    c.model.dropout = {0.0};
    c.model.decay = {0.0, 0.0};
    c.model.max_epochs = 2;
    c.model.max_batches_per_epoch = 2;
    c.model.max_holdout = 50;
    c.dr_starts = 8;
    c.batch_size = 16;
    c.seed_steps = 80;
    c.total_steps = 400;
    c.eval_interval = 80;
    c.eval_episodes = 2;
    c.task_overrides["episode_length"] = 40;
    return c;
}

std::vector<std::string> rows(const Trainer& t) {
    std::vector<std::string> out;
    for (const auto& r : t.metrics()) out.push_back(format_metrics(r));
    for (const auto& r : t.update_log()) out.push_back(format_update(r));
    return out;
}

std::vector<double> flat_params(const ad::ParameterSet& p) {
    std::vector<double> out;
    for (const auto& e : p.entries()) out.insert(out.end(), e.tensor.values().begin(), e.tensor.values().end());
    return out;
}

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("dhmbpo_algo_" + name);
    std::filesystem::remove_all(p);
    return p;
}

// State never moves; the integration blows up when the initial state is above 0.7.
class FlakyTask : public envs::Task {
public:
    FlakyTask() {
        spec_.id = "flaky";
        spec_.state_dim = spec_.observation_dim = spec_.action_dim = 1;
        spec_.action_low = {-1};
        spec_.action_high = {1};
        spec_.dt = 0.1;
        spec_.episode_length = 20;
        spec_.action_repeat = 2;
        spec_.reward_low = -1;
        spec_.reward_high = 0;
    }
    const envs::EnvSpec& spec() const override { return spec_; }
    std::vector<double> sample_initial_state(Rng& rng) const override { return {rng.uniform()}; }
    void derivative(std::span<const double> s, std::span<const double>, std::span<double> out) const override {
        out[0] = s[0] > 0.7 ? NAN : 0.0;
    }
    double reward(std::span<const double> s, std::span<const double> a) const override {
        return -s[0] * s[0] - 0.1 * a[0] * a[0];
    }
    std::map<std::string, double> constants() const override { return {}; }

private:
    envs::EnvSpec spec_;
};

}  // namespace

TEST(Config, VariantParsing) {
    const auto v = parse_variant("20,5");
    EXPECT_EQ(v.dr_horizon, 20u);
    EXPECT_EQ(v.tr_horizon, 5u);
    EXPECT_EQ(v.name(), "20,5");
    EXPECT_FALSE(parse_variant("0,0").uses_model());
    EXPECT_TRUE(parse_variant(" 0 , 5 ").uses_model());
    for (const char* bad : {"20", "20,5,1", "a,b", "-1,5", "20;5", ""})
        EXPECT_THROW(parse_variant(bad), ContractViolation) << bad;
}

TEST(Config, EntriesRoundTripThroughSet) {
    AlgoConfig a = desk_config();
    a.variant = parse_variant("0,5");
    a.gamma = 0.9871234567891234;
    a.task_overrides["max_torque"] = 1.5;
    AlgoConfig b;
    for (const auto& [k, v] : a.entries()) b.set(k, v);
    EXPECT_EQ(a.entries(), b.entries());
    EXPECT_EQ(b.gamma, a.gamma);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    AlgoConfig c;
    EXPECT_THROW(c.set("algo.nope", "1"), ContractViolation);
    EXPECT_THROW(c.set("algo.utd", "1.5"), ContractViolation);
    EXPECT_THROW(c.set("algo.gamma", "x"), ContractViolation);
    c.set("algo.utd", "0");
    EXPECT_THROW(c.validate(), ContractViolation);
    EXPECT_NO_THROW(default_config().validate());
    EXPECT_NO_THROW(desk_config().validate());
    EXPECT_THROW(preset("huge"), ContractViolation);
}

TEST(Config, DefaultsMatchTheSharedHyperparameters) {
    const auto c = default_config();
    EXPECT_EQ(c.gamma, 0.995);
    EXPECT_EQ(c.seed_steps, 5000u);
    EXPECT_EQ(c.batch_size, 256u);
    EXPECT_EQ(c.utd, 1u);
    EXPECT_EQ(c.variant.dr_horizon, 20u);
    EXPECT_EQ(c.variant.tr_horizon, 5u);
    EXPECT_EQ(c.iterations_per_dr, 20u);
    EXPECT_EQ(c.model.members, 8u);
    EXPECT_EQ(c.critic_members, 5u);
    EXPECT_EQ(c.target_momentum, 0.995);
    EXPECT_EQ(c.actor_lr, 3e-4);
    EXPECT_EQ(c.critic_lr, 3e-4);
    EXPECT_EQ(c.alpha_lr, 3e-4);
    EXPECT_EQ(c.model.learning_rate, 1e-3);
    EXPECT_EQ(c.alpha_init, 0.1);
    EXPECT_EQ(c.replay_capacity, 1'000'000u);
}

TEST(Metrics, RowFormatRoundTrips) {
    MetricsRow r;
    r.env_step = 1000;
    r.episode = 3;
    r.test_return_mean = 1.0 / 3.0;
    r.critic_loss = NAN;
    r.q_high = -2e-300;
    const auto back = parse_metrics(format_metrics(r));
    EXPECT_EQ(format_metrics(back), format_metrics(r));
    EXPECT_EQ(back.test_return_mean, r.test_return_mean);
    EXPECT_TRUE(metrics_header().rfind(
                    "env_step,episode,test_return_mean,test_return_std,critic_loss,actor_objective,alpha,grad_norm,"
                    "Q_l,Q_u,model_stop_epoch",
                    0) == 0);
}

TEST(Trainer, SeedPhaseMakesNoUpdates) {
    auto cfg = tiny("20,5");
    cfg.seed_steps = 120;
    Trainer t(cfg, "pendulum-swingup", 1);
    const auto before = flat_params(t.policy().parameters());
    while (t.env_steps() < cfg.seed_steps) {
        t.iterate();
        if (t.env_steps() < cfg.seed_steps) {
            EXPECT_EQ(t.updates(), 0u);
        }
    }
    // The episode that reached 120 steps starts the updates.
    EXPECT_EQ(t.env_steps(), 120u);
    EXPECT_EQ(t.updates(), 20u);
    EXPECT_NE(flat_params(t.policy().parameters()), before);
}

TEST(Trainer, UtdScalesUpdatesAndNotSteps) {
    for (std::size_t utd : {1u, 2u}) {
        auto cfg = tiny("20,5");
        cfg.utd = utd;
        Trainer t(cfg, "pendulum-swingup", 2);
        t.train();
        const std::size_t L = t.spec().agent_steps();
        EXPECT_EQ(t.env_steps(), t.episodes() * t.spec().episode_length);
        EXPECT_EQ(t.env_steps(), 400u);
        const std::size_t update_episodes = t.episodes() - (cfg.seed_steps / t.spec().episode_length - 1);
        EXPECT_EQ(t.updates(), update_episodes * L * utd);
    }
}

TEST(Trainer, StepsEqualEpisodesTimesLengthForEveryVariant) {
    for (const char* v : {"20,5", "0,5", "20,0", "0,0"}) {
        Trainer t(tiny(v), "pendulum-swingup", 3);
        t.train();
        EXPECT_EQ(t.env_steps(), t.episodes() * 40) << v;
        EXPECT_EQ(t.replay().size(), t.episodes() * 20) << v;
    }
}

TEST(Trainer, MetricsRowsFollowTheCadence) {
    Trainer t(tiny("20,5"), "pendulum-swingup", 4);
    t.train();
    ASSERT_EQ(t.metrics().size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(t.metrics()[i].env_step, 80 * (i + 1));
    EXPECT_TRUE(std::isnan(t.metrics()[0].critic_loss));
    EXPECT_GT(t.metrics()[4].updates, 0u);
    EXPECT_TRUE(std::isfinite(t.metrics()[4].critic_loss));
}

TEST(Trainer, ModelFreeVariantNeverTouchesTheModel) {
    Trainer t(tiny("0,0"), "pendulum-swingup", 5);
    t.train();
    EXPECT_EQ(t.model(), nullptr);
    EXPECT_EQ(t.model_activity().fits, 0u);
    EXPECT_EQ(t.model_activity().dr_refreshes, 0u);
    EXPECT_EQ(t.model_activity().model_steps, 0u);
    EXPECT_GT(t.updates(), 0u);
    EXPECT_THROW(t.refresh_model_buffer(), ContractViolation);
}

TEST(Trainer, ModelVariantsCountModelWork) {
    Trainer t(tiny("20,5"), "pendulum-swingup", 5);
    t.train();
    EXPECT_EQ(t.model_activity().fits, t.episodes());
    EXPECT_EQ(t.model_activity().dr_refreshes, t.updates() / 20);
    EXPECT_GT(t.model_activity().model_steps, 0u);
    EXPECT_TRUE(t.model_buffer().empty());
}

TEST(Trainer, SvgVariantDrawsEveryBatchFromTheReplayBuffer) {
    Trainer t(tiny("0,5"), "pendulum-swingup", 6);
    std::size_t critic_batches = 0, actor_batches = 0, rows_seen = 0;
    bool all_env = true;
    TrainerHooks hooks;
    hooks.on_critic = [&](const CriticTrace& tr) {
        ++critic_batches;
        for (auto p : tr.batch->provenance) {
            all_env = all_env && p == buffers::Provenance::environment;
            ++rows_seen;
        }
    };
    hooks.on_actor = [&](const ActorTrace& tr) {
        ++actor_batches;
        for (auto p : tr.provenance) all_env = all_env && p == buffers::Provenance::environment;
    };
    t.set_hooks(hooks);
    t.train();
    EXPECT_TRUE(all_env);
    EXPECT_EQ(critic_batches, t.updates());
    EXPECT_EQ(actor_batches, t.updates());
    EXPECT_EQ(rows_seen, t.updates() * 16);
    EXPECT_EQ(t.model_activity().dr_refreshes, 0u);
    EXPECT_GT(t.model_activity().model_steps, 0u);
}

TEST(Trainer, DhmbpoDrawsEveryBatchFromTheModelBuffer) {
    Trainer t(tiny("20,5"), "pendulum-swingup", 7);
    bool all_model = true;
    TrainerHooks hooks;
    hooks.on_critic = [&](const CriticTrace& tr) {
        for (auto p : tr.batch->provenance) all_model = all_model && p == buffers::Provenance::model;
    };
    t.set_hooks(hooks);
    t.train();
    EXPECT_GT(t.updates(), 0u);
    EXPECT_TRUE(all_model);
}

// y = r + g (1 - d) (min over the recorded subset of clamp-free target values,
// then clamped) - g alpha logp', with a' redrawn from the recorded stream.
TEST(Trainer, MbpoVariantTargetsMatchTheOneStepOracle) {
    Trainer t(tiny("20,0"), "pendulum-swingup", 8);
    const double gamma = t.config().gamma;
    std::size_t checked = 0;
    double worst = 0;
    TrainerHooks hooks;
    hooks.on_critic = [&](const CriticTrace& tr) {
        const auto& b = *tr.batch;
        const std::size_t B = b.size, S = b.state_dim;
        Rng rng = tr.rng_before_target;
        const auto next = ad::Tensor::from_values({B, S}, b.next_states);
        const auto out = t.policy().sample(next, rng);
        const auto q = t.critics().target_values(next, out.actions);
        ASSERT_EQ(tr.report.subset.size(), 2u);
        for (std::size_t i = 0; i < B; ++i) {
            double m = INFINITY;
            for (auto k : tr.report.subset) m = std::min(m, q[k * B + i]);
            if (tr.bounds.initialized()) m = std::min(std::max(m, tr.bounds.q_low()), tr.bounds.q_high());
            const double y =
                b.rewards[i] + gamma * (1.0 - b.terminated[i]) * (m - tr.alpha * out.log_probs.values()[i]);
            worst = std::max(worst, std::abs(y - tr.target->values[i]) / std::max(1.0, std::abs(y)));
            ++checked;
        }
    };
    t.set_hooks(hooks);
    // The hook runs before the target networks move, so target_values sees the
    // same parameters the update used.
    t.train();
    EXPECT_GT(checked, 0u);
    EXPECT_LE(worst, 1e-12);
}

TEST(Trainer, ClippedTargetsStayInsideTheBounds) {
    auto cfg = tiny("20,5");
    cfg.total_steps = 600;
    Trainer t(cfg, "pendulum-swingup", 9);
    std::size_t outside = 0, seen = 0;
    TrainerHooks hooks;
    hooks.on_critic = [&](const CriticTrace& tr) {
        ASSERT_TRUE(tr.bounds.initialized());
        for (std::size_t i = 0; i < tr.target->terminal.size(); ++i) {
            if (!tr.target->valid[i]) continue;
            const double v = tr.target->terminal[i];
            outside += v < tr.bounds.q_low() || v > tr.bounds.q_high();
            ++seen;
        }
    };
    t.set_hooks(hooks);
    t.train();
    EXPECT_GT(seen, 0u);
    EXPECT_EQ(outside, 0u);
}

TEST(Trainer, CriticLossFallsOnAFrozenBatch) {
    auto cfg = tiny("20,5");
    cfg.critic_dropout = 0;
    Trainer t(cfg, "pendulum-swingup", 10);
    while (t.env_steps() < cfg.seed_steps) t.iterate();
    Rng rng(3);
    const auto batch = t.replay().sample_uniform(64, rng);
    rollouts::MveTarget target;
    target.values.resize(64);
    target.valid.assign(64, 1);
    for (std::size_t i = 0; i < 64; ++i) target.values[i] = 10 * batch.rewards[i];
    std::vector<double> losses;
    for (int i = 0; i < 50; ++i) losses.push_back(t.regress_critics(batch, target));
    for (std::size_t i = 1; i < losses.size(); ++i) EXPECT_LT(losses[i], losses[i - 1]) << i;
}

TEST(Trainer, CriticLossFallsWithRecomputedTargets) {
    auto cfg = tiny("20,5");
    cfg.critic_lr = 3e-3;
    Trainer t(cfg, "pendulum-swingup", 10);
    while (t.env_steps() < cfg.seed_steps) t.iterate();
    t.refresh_model_buffer();
    Rng rng(3);
    const auto batch = t.model_buffer().sample_uniform(64, rng);
    std::vector<double> losses;
    for (int i = 0; i < 50; ++i) losses.push_back(t.critic_update(batch));
    const double head = std::accumulate(losses.begin(), losses.begin() + 10, 0.0);
    const double tail = std::accumulate(losses.end() - 10, losses.end(), 0.0);
    EXPECT_LT(tail, head);
}

// Scores the policy with one fixed rollout stream so successive values differ
// only through the parameters.
double common_noise_objective(Trainer& t, const buffers::Batch& starts) {
    ad::NoGradScope no_grad;
    const rollouts::ModelDynamics dyn(*t.model());
    const rollouts::CriticValue value(t.critics(), t.bounds());
    Rng rng(99);
    const auto s = ad::Tensor::from_values({starts.size, starts.state_dim}, starts.states);
    const auto traj = rollouts::training_rollout(dyn, t.policy(), s, t.config().variant.tr_horizon, rng);
    return rollouts::mve_value(traj, value, t.temperature().alpha(), t.config().gamma).objective.item();
}

TEST(Trainer, ActorObjectiveRisesWithFrozenCriticAndModel) {
    auto cfg = tiny("0,5");
    cfg.alpha_lr = 0;  // keep the soft objective fixed
    Trainer t(cfg, "pendulum-swingup", 11);
    while (t.updates() < 100) t.iterate();
    Rng rng(4);
    const auto starts = t.replay().sample_uniform(256, rng);
    std::vector<double> obj{common_noise_objective(t, starts)};
    for (int i = 0; i < 50; ++i) {
        t.actor_update(starts);
        obj.push_back(common_noise_objective(t, starts));
    }
    std::size_t rises = 0;
    for (std::size_t i = 1; i < obj.size(); ++i) rises += obj[i] > obj[i - 1];
    EXPECT_GT(obj.back(), obj.front());
    EXPECT_GE(rises, 40u);
}

TEST(Trainer, SameSeedSameRun) {
    Trainer a(tiny("20,5"), "pendulum-swingup", 12), b(tiny("20,5"), "pendulum-swingup", 12);
    a.train();
    b.train();
    EXPECT_EQ(rows(a), rows(b));
    EXPECT_EQ(flat_params(a.policy().parameters()), flat_params(b.policy().parameters()));
    Trainer c(tiny("20,5"), "pendulum-swingup", 13);
    c.train();
    EXPECT_NE(rows(a), rows(c));
}

TEST(Trainer, ResumeReproducesTheRunBitwise) {
    for (const char* v : {"20,5", "0,0"}) {
        const auto dir = scratch(std::string("resume_") + (v[0] == '2' ? "dh" : "sac"));
        Trainer a(tiny(v), "pendulum-swingup", 14);
        for (int e = 0; e < 4; ++e) a.iterate();
        a.save_checkpoint(dir);
        a.train();

        auto b = Trainer::resume(dir);
        EXPECT_EQ(b->env_steps(), 160u);
        b->train();
        EXPECT_EQ(rows(a), rows(*b)) << v;
        EXPECT_EQ(flat_params(a.policy().parameters()), flat_params(b->policy().parameters())) << v;
        EXPECT_EQ(flat_params(a.critics().target_parameters()), flat_params(b->critics().target_parameters()))
            << v;
        std::filesystem::remove_all(dir);
    }
}

TEST(Trainer, CheckpointRejectsAnotherConfig) {
    const auto dir = scratch("mismatch");
    Trainer a(tiny("20,5"), "pendulum-swingup", 15);
    a.iterate();
    a.save_checkpoint(dir);
    Trainer b(tiny("0,5"), "pendulum-swingup", 15);
    EXPECT_THROW(b.load_checkpoint(dir), ContractViolation);
    Trainer c(tiny("20,5"), "pendulum-swingup", 16);
    EXPECT_THROW(c.load_checkpoint(dir), ContractViolation);
    std::filesystem::remove_all(dir);
}

TEST(Trainer, EnvironmentFaultDropsTheEpisode) {
    envs::register_task("flaky", [](const std::map<std::string, double>&) { return std::make_shared<FlakyTask>(); });
    auto cfg = tiny("0,0");
    cfg.task_overrides.clear();
    cfg.seed_steps = 40;
    cfg.total_steps = 200;
    cfg.eval_interval = 1000;
    Trainer t(cfg, "flaky", 17);
    t.train();
    EXPECT_GT(t.dropped_episodes(), 0u);
    EXPECT_EQ(t.env_steps(), t.episodes() * 20);
    EXPECT_EQ(t.replay().size(), t.episodes() * 10);
    for (std::size_t i = 0; i < t.replay().size(); ++i) EXPECT_LE(t.replay().at(i).state[0], 0.7);
}

TEST(Trainer, MetricsFileHasTheDocumentedHeader) {
    const auto dir = scratch("metrics");
    std::filesystem::create_directories(dir);
    Trainer t(tiny("0,0"), "pendulum-swingup", 18);
    t.train();
    t.write_metrics(dir / "metrics.csv");
    std::ifstream in(dir / "metrics.csv");
    std::string header, line;
    std::getline(in, header);
    EXPECT_EQ(header, metrics_header());
    std::size_t n = 0;
    while (std::getline(in, line)) ++n;
    EXPECT_EQ(n, t.metrics().size());
    std::filesystem::remove_all(dir);
}

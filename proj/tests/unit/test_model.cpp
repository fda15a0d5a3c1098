#include <gtest/gtest.h>

#include <cmath>

#include "dhmbpo/autodiff/tape.hpp"
#include "dhmbpo/core/error.hpp"
#include "dhmbpo/model/ensemble_model.hpp"
#include "fd_oracle.hpp"

using namespace dhmbpo;
using namespace dhmbpo::model;
using ad::Tensor;

namespace {

ModelConfig small_config(std::size_t members = 4) {
    ModelConfig c;
    c.members = members;
    c.hidden = {32, 32};
    c.dropout = {0.0, 0.0};
    c.decay = {0.0, 0.0, 0.0};
    return c;
}

// s' = A s + B a + noise, reward = -|s|^2 - 0.1 a^2 (noise-free).
buffers::TransitionBuffer linear_data(std::size_t n, double noise, std::uint64_t seed) {
    Rng rng(seed);
    auto buf = buffers::make_replay_buffer(2, 1, n);
    for (std::size_t i = 0; i < n; ++i) {
        Transition t;
        t.state = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
        t.action = {rng.uniform(-1, 1)};
        const double s0 = t.state[0], s1 = t.state[1], a = t.action[0];
        t.next_state = {0.9 * s0 + 0.2 * s1 + noise * rng.normal(), -0.1 * s0 + 0.8 * s1 + 0.5 * a + noise * rng.normal()};
        t.reward = -(s0 * s0 + s1 * s1) - 0.1 * a * a;
        buf.push(t);
    }
    return buf;
}

buffers::NormStats stats_of(const buffers::TransitionBuffer& buf) {
    buffers::NormStats s(buf.state_dim());
    s.update(buf.all());
    return s;
}

}  // namespace

TEST(GaussianNll, ZeroResidualUnitSigma) {
    Tensor mu = Tensor::from_values({1, 2, 2}, {1, 2, 3, 4});
    Tensor ls = Tensor::zeros({1, 2});
    std::vector<ad::Scalar> t{1, 2, 3, 4}, w{1, 1};
    EXPECT_DOUBLE_EQ(gaussian_nll(mu, ls, t, w).item(), 0.0);
}

TEST(GaussianNll, ResidualEqualToSigma) {
    Tensor mu = Tensor::from_values({1, 1, 3}, {0, 0, 0});
    Tensor ls = Tensor::zeros({1, 3});
    std::vector<ad::Scalar> t{1, -1, 1}, w{1};
    EXPECT_DOUBLE_EQ(gaussian_nll(mu, ls, t, w).item(), 0.5);

    const double log_s = std::log(2.0);
    Tensor ls2 = Tensor::full({1, 3}, log_s);
    std::vector<ad::Scalar> t2{2, -2, 2};
    EXPECT_NEAR(gaussian_nll(mu, ls2, t2, w).item(), log_s + 0.5, 1e-15);
}

TEST(GaussianNll, LinearInWeights) {
    Rng rng(2);
    std::vector<ad::Scalar> mu(2 * 3 * 2), t(3 * 2), w(2 * 3);
    for (auto& v : mu) v = rng.normal();
    for (auto& v : t) v = rng.normal();
    for (auto& v : w) v = rng.exponential();
    Tensor m = Tensor::from_values({2, 3, 2}, mu);
    Tensor ls = Tensor::from_values({2, 2}, {0.1, -0.2, 0.3, 0.0});
    std::vector<ad::Scalar> w2(w);
    for (auto& v : w2) v *= 2;
    EXPECT_NEAR(gaussian_nll(m, ls, t, w2).item(), 2 * gaussian_nll(m, ls, t, w).item(), 1e-14);
}

TEST(GaussianNll, GradientMatchesFiniteDifferences) {
    Rng rng(3);
    std::vector<ad::Scalar> mu(3 * 4 * 2), t(4 * 2), w(3 * 4), ls(3 * 2);
    for (auto& v : mu) v = rng.normal();
    for (auto& v : t) v = rng.normal();
    for (auto& v : w) v = rng.exponential();
    for (auto& v : ls) v = 0.3 * rng.normal();
    Tensor m = Tensor::parameter({3, 4, 2}, mu);
    Tensor l = Tensor::parameter({3, 2}, ls);
    auto build = [&] { return gaussian_nll(m, l, t, w); };
    auto analytic = fd::tape_gradient(build, {m, l});
    auto numeric = fd::central_gradient(
        [&] {
            ad::NoGradScope ng;
            return static_cast<double>(build().item());
        },
        {m, l});
    EXPECT_LE(fd::relative_error(analytic, numeric), 1e-5);
}

TEST(ValidationScore, SingleMember) {
    std::vector<double> means{0.5, -1}, var{4, 0.25}, t{1, 0};
    auto s = validation_scores(means, var, t, 1, 1, 2);
    const double expected = 0.5 * (0.25 / 4 + std::log(4.0) + 1 / 0.25 + std::log(0.25));
    EXPECT_NEAR(s[0], expected, 1e-15);
}

TEST(ValidationScore, IdenticalMembersMatchSingle) {
    std::vector<double> one{0.5, -1}, two{0.5, -1, 0.5, -1}, var1{4, 0.25}, var2{4, 0.25, 4, 0.25}, t{1, 0};
    EXPECT_NEAR(validation_scores(two, var2, t, 2, 1, 2)[0], validation_scores(one, var1, t, 1, 1, 2)[0], 1e-15);
}

TEST(ValidationScore, TwoMemberHandExample) {
    std::vector<double> means{0, 2}, var{1, 1}, t{1};
    auto s = validation_scores(means, var, t, 2, 1, 1);
    EXPECT_NEAR(s[0], 0.5 * std::log(3.0), 1e-15);
    EXPECT_NEAR(s[0], 0.5493, 1e-4);
}

TEST(EarlyStopping, PatienceFormula) {
    EXPECT_EQ(patience_epochs(5, 3), 6u);  // ceil(5 ln 3) = ceil(5.49)
    EXPECT_EQ(patience_epochs(5, 2), 4u);
    EXPECT_EQ(patience_epochs(5, 1), 1u);  // ln 1 = 0, guarded
    EXPECT_NEAR(normal_upper_quantile(0.1), 1.2815515655446004, 1e-12);
}

TEST(EarlyStopping, StrictlyWorseStopsAfterPatience) {
    EarlyStopping stop(4, 0.1);
    stop.start({1.0, 0.01, 100});
    std::size_t epochs = 0;
    while (!stop.should_stop()) {
        ++epochs;
        EXPECT_FALSE(stop.observe({1.0 + epochs, 0.01, 100}));
    }
    EXPECT_EQ(epochs, 4u);
}

TEST(EarlyStopping, SignificantImprovementResetsCounter) {
    EarlyStopping stop(3, 0.1);
    stop.start({1.0, 1.0, 100});
    EXPECT_FALSE(stop.observe({0.95, 1.0, 100}));  // z = 0.35
    EXPECT_EQ(stop.since_improvement(), 1u);
    EXPECT_TRUE(stop.observe({0.5, 1.0, 100}));  // z = 3.5
    EXPECT_EQ(stop.since_improvement(), 0u);
    EXPECT_EQ(stop.best().mean, 0.5);
}

TEST(EarlyStopping, PooledZStatistic) {
    ScoreSummary a{2.0, 1.0, 50}, b{1.5, 3.0, 50};
    // pooled variance 2, se = sqrt(2 * 2/50)
    EXPECT_NEAR(improvement_z(a, b), 0.5 / std::sqrt(0.08), 1e-12);
}

TEST(Fit, LinearDynamicsWithinTwiceNoiseFloor) {
    const double noise = 0.05;
    auto train = linear_data(10000, noise, 1);
    auto test = linear_data(2000, noise, 2);
    Rng rng(7);
    auto cfg = small_config(4);
    cfg.max_epochs = 60;
    EnsembleGaussianModel model(2, 1, cfg, rng);
    auto report = model.fit(train, stats_of(train), rng);
    EXPECT_GT(report.stop_epoch, 0u);
    auto r = offline_rmse(model, test.all(), "evaluation");
    EXPECT_LE(r.state_rmse, 2 * noise) << "stop epoch " << report.stop_epoch;
}

TEST(Fit, StrictlyWorseScoresStopAfterPatienceAndRestore) {
    auto data = linear_data(500, 0.05, 3);
    Rng rng(1);
    EnsembleGaussianModel model(2, 1, small_config(2), rng);
    std::vector<ad::Scalar> before;
    for (const auto& e : model.parameters().entries()) before.insert(before.end(), e.tensor.values().begin(), e.tensor.values().end());
    auto report = model.fit(data, stats_of(data), rng, [](std::size_t epoch, std::vector<double>& s) {
        for (double& v : s) v += 10.0 * epoch;
    });
    EXPECT_EQ(report.patience, patience_epochs(5, 2));
    EXPECT_EQ(report.stop_epoch, report.patience);
    EXPECT_EQ(report.best_epoch, 0u);
    std::vector<ad::Scalar> after;
    for (const auto& e : model.parameters().entries()) after.insert(after.end(), e.tensor.values().begin(), e.tensor.values().end());
    EXPECT_EQ(before, after);
}

TEST(Fit, DeterministicUnderSeed) {
    auto data = linear_data(600, 0.05, 4);
    auto run = [&] {
        Rng rng(5);
        auto cfg = small_config(2);
        cfg.dropout = {0.1, 0.1};
        cfg.max_epochs = 3;
        EnsembleGaussianModel model(2, 1, cfg, rng);
        model.fit(data, stats_of(data), rng);
        std::vector<ad::Scalar> v;
        for (const auto& e : model.parameters().entries()) v.insert(v.end(), e.tensor.values().begin(), e.tensor.values().end());
        return v;
    };
    EXPECT_EQ(run(), run());
}

TEST(Fit, EmptyValidationSplitIsError) {
    auto data = linear_data(3, 0.05, 4);
    Rng rng(5);
    EnsembleGaussianModel model(2, 1, small_config(2), rng);
    EXPECT_THROW(model.fit(data, stats_of(data), rng), ContractViolation);
}

TEST(Fit, LogSigmaStaysInBounds) {
    auto data = linear_data(400, 0.0, 6);
    Rng rng(2);
    auto cfg = small_config(2);
    cfg.max_epochs = 30;
    cfg.learning_rate = 0.05;
    cfg.log_sigma_min = -2;
    EnsembleGaussianModel model(2, 1, cfg, rng);
    model.fit(data, stats_of(data), rng);
    for (double v : model.variances()) {
        EXPECT_GE(v, std::exp(-4.0) * (1 - 1e-12));
        EXPECT_LE(v, std::exp(8.0));
    }
}

TEST(Ts1, ZeroNoiseSingleMemberIsMeanPath) {
    auto data = linear_data(300, 0.05, 8);
    Rng rng(3);
    auto cfg = small_config(1);
    cfg.max_epochs = 2;
    EnsembleGaussianModel model(2, 1, cfg, rng);
    model.fit(data, stats_of(data), rng);
    auto batch = data.all();
    std::vector<double> mean_next, mean_r;
    model.mean_prediction(batch.states, batch.actions, batch.size, mean_next, mean_r);
    Rng sample_rng(9);
    auto p = model.ts1_predict(batch.states, batch.actions, batch.size, sample_rng, 0.0);
    for (std::size_t i = 0; i < mean_next.size(); ++i) EXPECT_NEAR(p.next_states[i], mean_next[i], 1e-12);
    for (std::size_t i = 0; i < mean_r.size(); ++i) EXPECT_NEAR(p.rewards[i], mean_r[i], 1e-12);
}

TEST(Ts1, MemberSelectionUniform) {
    Rng rng(3);
    const std::size_t M = 8, n = 100000;
    EnsembleGaussianModel model(2, 1, small_config(M), rng);
    std::vector<double> s(2 * n, 0.1), a(n, 0.0);
    Rng draw(4);
    auto p = model.ts1_predict(s, a, n, draw);
    std::vector<double> freq(M, 0);
    for (auto m : p.members) freq[m] += 1;
    const double expected = double(n) / M, sd = std::sqrt(n * (1.0 / M) * (1 - 1.0 / M));
    for (double f : freq) EXPECT_LE(std::abs(f - expected), 5 * sd);
}

TEST(Ts1, FixedSeedReproducesTrajectory) {
    Rng rng(3);
    EnsembleGaussianModel model(2, 1, small_config(4), rng);
    auto rollout = [&](std::uint64_t seed) {
        Rng r(seed);
        std::vector<double> s{0.3, -0.2, 0.1, 0.4}, a{0.5, -0.5};
        std::vector<double> path;
        for (int t = 0; t < 5; ++t) {
            auto p = model.ts1_predict(s, a, 2, r);
            s = p.next_states;
            path.insert(path.end(), s.begin(), s.end());
        }
        return path;
    };
    EXPECT_EQ(rollout(11), rollout(11));
    EXPECT_NE(rollout(11), rollout(12));
}

TEST(Ts1, DifferentiableStepGradientMatchesFiniteDifferences) {
    auto data = linear_data(300, 0.05, 8);
    Rng rng(3);
    auto cfg = small_config(3);
    cfg.max_epochs = 2;
    EnsembleGaussianModel model(2, 1, cfg, rng);
    model.fit(data, stats_of(data), rng);
    Tensor s = Tensor::parameter({3, 2}, {0.1, 0.2, -0.3, 0.4, 0.5, -0.6});
    Tensor a = Tensor::parameter({3, 1}, {0.2, -0.1, 0.7});
    auto build = [&] {
        Rng r(21);  // same members and noise on every evaluation
        auto step = model.ts1_step(s, a, r, 1.0);
        return ad::sum(ad::square(step.next_states)) + ad::sum(step.rewards);
    };
    auto analytic = fd::tape_gradient(build, {s, a});
    auto numeric = fd::central_gradient(
        [&] {
            ad::NoGradScope ng;
            return static_cast<double>(build().item());
        },
        {s, a});
    EXPECT_LE(fd::relative_error(analytic, numeric), 1e-5);
    // Model parameters are constants here.
    for (const auto& e : model.parameters().entries()) EXPECT_FALSE(e.tensor.has_grad());
}

TEST(OfflineRmse, ConstantPredictorEqualsTargetStd) {
    std::vector<double> t{1, 2, 3, 4, 5}, c(5, 3.0);
    EXPECT_NEAR(rmse(c, t), std::sqrt(2.0), 1e-15);  // population std of t
    EXPECT_EQ(rmse(t, t), 0.0);
}

TEST(OfflineRmse, InvariantToShuffling) {
    auto data = linear_data(400, 0.05, 9);
    Rng rng(3);
    auto cfg = small_config(2);
    cfg.max_epochs = 2;
    EnsembleGaussianModel model(2, 1, cfg, rng);
    model.fit(data, stats_of(data), rng);
    auto batch = data.all();
    auto reversed = buffers::make_replay_buffer(2, 1, 400);
    for (std::size_t i = data.size(); i-- > 0;) reversed.push(data.at(i));
    auto a = offline_rmse(model, batch, "train");
    auto b = offline_rmse(model, reversed.all(), "train");
    EXPECT_NEAR(a.state_rmse, b.state_rmse, 1e-12);
    EXPECT_NEAR(a.reward_rmse, b.reward_rmse, 1e-12);
}

TEST(Model, PredictsDisplacementNotAbsoluteState) {
    // s' = s everywhere: normalized targets are the zero displacement.
    auto buf = buffers::make_replay_buffer(2, 1, 10);
    for (int i = 0; i < 10; ++i) buf.push({{0.1 * i, -0.2 * i}, {0}, 0, {0.1 * i, -0.2 * i}, false, false});
    Rng rng(1);
    EnsembleGaussianModel model(2, 1, small_config(2), rng);
    model.set_stats(stats_of(buf));
    std::vector<ad::Scalar> targets;
    model.make_targets(buf.all(), targets);
    for (std::size_t i = 0; i < targets.size(); ++i)
        if (i % 3 != 2) {
            EXPECT_EQ(targets[i], 0.0);
        }
}

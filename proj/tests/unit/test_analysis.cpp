#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "dhmbpo/algo/trainer.hpp"
#include "dhmbpo/analysis/bias_sem.hpp"
#include "dhmbpo/analysis/config_file.hpp"
#include "dhmbpo/analysis/histogram.hpp"
#include "dhmbpo/analysis/rmedse.hpp"
#include "dhmbpo/analysis/stats.hpp"
#include "dhmbpo/core/error.hpp"

using namespace dhmbpo;
using namespace dhmbpo::analysis;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("dhmbpo_analysis_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

algo::AlgoConfig tiny(const std::string& variant) {
    algo::AlgoConfig c;
    c.variant = algo::parse_variant(variant);
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
    c.total_steps = 240;
    c.eval_interval = 80;
    c.eval_episodes = 1;
    c.task_overrides["episode_length"] = 40;
    return c;
}

}  // namespace

// ---- summary statistics ----

TEST(Stats, InterquartileMeanOfOneToFour) {
    const std::vector<double> v{4, 1, 3, 2};
    EXPECT_DOUBLE_EQ(interquartile_mean(v), 2.5);
    EXPECT_DOUBLE_EQ(median(v), 2.5);
    EXPECT_DOUBLE_EQ(mean(v), 2.5);
}

TEST(Stats, InterquartileMeanDropsTheTails) {
    const std::vector<double> v{-1000, 1, 2, 3, 4, 5, 6, 1000};
    EXPECT_DOUBLE_EQ(interquartile_mean(v), 3.5);
}

TEST(Stats, MeanEqualsMedianOnSymmetricInput) {
    const std::vector<double> s{2, 4, 5, 6, 8};
    EXPECT_DOUBLE_EQ(mean(s), median(s));
    EXPECT_DOUBLE_EQ(mean(s), interquartile_mean(s));
    const std::vector<double> skewed{0, 1, 2, 3, 100};
    EXPECT_NE(mean(skewed), median(skewed));
}

TEST(Stats, InterpolateClampsAtTheEnds) {
    const std::vector<double> xs{1, 3}, ys{10, 30};
    EXPECT_DOUBLE_EQ(interpolate(xs, ys, 0), 10);
    EXPECT_DOUBLE_EQ(interpolate(xs, ys, 2), 20);
    EXPECT_DOUBLE_EQ(interpolate(xs, ys, 5), 30);
}

TEST(Aggregate, RunNormalizedByItsOwnFinalReturnEndsAtOne) {
    Curve c{"pendulum-swingup", "a", {1000, 2000, 3000, 4000}, {10, 20, 30, 40}};
    const auto res = aggregate({c}, {{"pendulum-swingup", 40.0}}, 4);
    ASSERT_EQ(res.rows.size(), 4u);
    EXPECT_DOUBLE_EQ(res.rows.back().step_fraction, 1.0);
    EXPECT_DOUBLE_EQ(res.rows.back().mean, 1.0);
    EXPECT_DOUBLE_EQ(res.rows.back().iqm, 1.0);
    EXPECT_DOUBLE_EQ(res.rows[1].mean, 0.5);
    EXPECT_EQ(res.rows[0].runs, 1u);
}

TEST(Aggregate, ResamplesOntoTheFractionGrid) {
    // Evaluations at 0.3 and 1.0 of the run; 0.2 is held at the first value.
    Curve c{"t", "a", {300, 1000}, {3, 10}};
    const auto res = aggregate({c}, {{"t", 10.0}}, 5);
    ASSERT_EQ(res.rows.size(), 5u);
    EXPECT_DOUBLE_EQ(res.rows[0].step_fraction, 0.2);
    EXPECT_DOUBLE_EQ(res.rows[0].median, 0.3);
    EXPECT_NEAR(res.rows[1].median, 0.3 + (0.4 - 0.3) / 0.7 * 0.7, 1e-12);  // 0.4
    EXPECT_NEAR(res.rows[3].median, 0.8, 1e-12);
}

TEST(Aggregate, StatisticsAcrossRuns) {
    std::vector<Curve> runs;
    for (double final : {1.0, 2.0, 3.0, 4.0}) runs.push_back({"t", "r", {10, 20}, {0, final}});
    runs.push_back({"u", "r", {5}, {50}});
    const auto res = aggregate(runs, {{"t", 2.0}, {"u", 100.0}}, 2);
    const auto& last = res.rows.back();
    EXPECT_EQ(last.runs, 5u);
    // Normalized finals: 0.5, 1, 1.5, 2, 0.5.
    EXPECT_DOUBLE_EQ(last.mean, 1.1);
    EXPECT_DOUBLE_EQ(last.median, 1.0);
    EXPECT_DOUBLE_EQ(last.iqm, (0.5 + 1.0 + 1.5) / 3.0);
}

TEST(Aggregate, TaskWithoutBaselineIsExcluded) {
    Curve a{"known", "a", {1, 2}, {1, 2}};
    Curve b{"unknown", "b", {1, 2}, {5, 6}};
    Curve z{"zero", "z", {1, 2}, {5, 6}};
    const auto res = aggregate({a, b, z}, {{"known", 2.0}, {"zero", 0.0}}, 2);
    EXPECT_EQ(res.rows.back().runs, 1u);
    EXPECT_DOUBLE_EQ(res.rows.back().mean, 1.0);
    ASSERT_EQ(res.excluded_tasks.size(), 2u);
}

// ---- histograms ----

TEST(Histogram, BinIndexEdges) {
    EXPECT_EQ(bin_index(-0.1, 0, 1, 4), 0u);
    EXPECT_EQ(bin_index(0.0, 0, 1, 4), 1u);
    EXPECT_EQ(bin_index(0.26, 0, 1, 4), 2u);
    EXPECT_EQ(bin_index(1.0, 0, 1, 4), 4u);
    EXPECT_EQ(bin_index(1.01, 0, 1, 4), 5u);
}

TEST(Histogram, AllEqualValuesFillOneBin) {
    RunningHistogram h("reward", 64);
    const std::vector<double> v(100, 3.25);
    const auto s = h.observe(v, 0);
    EXPECT_EQ(s.bins(), 64u);
    EXPECT_EQ(s.total(), 100u);
    std::size_t nonzero = 0;
    for (auto c : s.counts) nonzero += c > 0;
    EXPECT_EQ(nonzero, 1u);
    EXPECT_EQ(s.counts.front(), 0u);
    EXPECT_EQ(s.counts.back(), 0u);
}

TEST(Histogram, CountsSumToTheBatchSize) {
    RunningHistogram h("target", 16);
    Rng rng(3);
    for (std::size_t tick = 0; tick < 5; ++tick) {
        std::vector<double> v(257);
        for (auto& x : v) x = rng.normal() * (1.0 + tick);
        EXPECT_EQ(h.observe(v, tick).total(), v.size());
    }
}

TEST(Histogram, OutlierLandsInTheOverflowBin) {
    RunningHistogram h("reward", 64);
    std::vector<double> first{0.0, 0.5, 1.0};
    h.observe(first, 0);
    std::vector<double> second{0.2, 0.4, 10.0};
    const auto s = h.observe(second, 1);
    EXPECT_DOUBLE_EQ(s.low, 0.0);
    EXPECT_DOUBLE_EQ(s.high, 1.0);
    EXPECT_EQ(s.counts.back(), 1u);
    // The outlier then widens the running range for the next batch.
    EXPECT_DOUBLE_EQ(h.running_high(), 10.0);
    EXPECT_EQ(h.observe(second, 2).counts.back(), 0u);
}

TEST(Histogram, NonFiniteValuesAreRejected) {
    RunningHistogram h("reward");
    std::vector<double> v{1.0, std::numeric_limits<double>::quiet_NaN()};
    EXPECT_THROW(h.observe(v, 0), ContractViolation);
}

TEST(Histogram, CsvHasOneLinePerBin) {
    RunningHistogram h("reward", 4);
    std::vector<double> v{0, 1, 2, 3};
    const auto dir = scratch("hist");
    write_histograms_csv(dir / "h.csv", {h.observe(v, 0)});
    std::ifstream in(dir / "h.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "tick,quantity,bin,lower,upper,count");
    std::size_t lines = 0, total = 0;
    while (std::getline(in, line)) {
        ++lines;
        total += std::stoul(line.substr(line.rfind(',') + 1));
    }
    EXPECT_EQ(lines, 6u);
    EXPECT_EQ(total, 4u);
}

// ---- bias and standard error ----

TEST(BiasSem, TwoStateExample) {
    // g_1 = 0, g_2 = 2, gbar = 1: squared deviations 1 and 1.
    const std::vector<std::vector<double>> g{{0.0}, {2.0}};
    const std::vector<double> gbar{1.0};
    const auto r = bias_sem(g, gbar);
    EXPECT_DOUBLE_EQ(r.bias, 1.0);
    EXPECT_DOUBLE_EQ(r.sem, 1.0);
}

TEST(BiasSem, IdenticalGradientsHaveNoSpread) {
    const std::vector<std::vector<double>> g(8, {0.3, -0.7, 1.1});
    const std::vector<double> gbar{0.3, -0.7, 1.1};
    const auto r = bias_sem(g, gbar);
    EXPECT_NEAR(r.bias, 0.0, 1e-15);
    EXPECT_NEAR(r.sem, 0.0, 1e-15);
}

TEST(BiasSem, MatchesAHandComputedVectorCase) {
    const std::vector<std::vector<double>> g{{1, 0}, {0, 1}, {1, 1}};
    const std::vector<double> gbar{0, 0};
    const auto r = bias_sem(g, gbar);
    EXPECT_NEAR(r.bias, (1.0 + 1.0 + 2.0) / 3.0, 1e-15);
    // mean (2/3, 2/3); squared deviations 5/9, 5/9, 2/9; sum 4/3.
    EXPECT_NEAR(r.sem, std::sqrt((4.0 / 3.0) / 6.0), 1e-15);
}

TEST(BiasSem, NeedsTwoStatesAndTwoRollouts) {
    const std::vector<std::vector<double>> one{{1.0}};
    const std::vector<double> gbar{0.0};
    EXPECT_THROW(bias_sem(one, gbar), ContractViolation);
    LqBiasSemConfig c;
    c.rollouts = 1;
    c.states = 4;
    EXPECT_THROW(lq_bias_sem(c), ContractViolation);
}

TEST(BiasSem, LqBiasShrinksWithTheHorizon) {
    LqBiasSemConfig c;
    c.states = 32;
    c.rollouts = 32;
    c.horizons = {1, 9};
    const auto rec = lq_bias_sem(c);
    ASSERT_EQ(rec.size(), 2u);
    EXPECT_GT(rec[0].bias, rec[1].bias);
    EXPECT_LT(rec[0].sem, rec[1].sem);
    EXPECT_EQ(rec[0].truth, "closed_form");
}

// ---- RMedSE ----

TEST(Rmedse, ZeroWhenEstimatesEqualTruth) {
    const std::vector<double> q{1, -2, 3.5, 100};
    EXPECT_DOUBLE_EQ(rmedse(q, q).error, 0.0);
}

TEST(Rmedse, SingleProbe) {
    const std::vector<double> est{0.5}, truth{1.0};
    const auto r = rmedse(est, truth);
    EXPECT_DOUBLE_EQ(r.error, 0.5);
    EXPECT_EQ(r.used, 1u);
}

TEST(Rmedse, MedianIgnoresAnOutlier) {
    const std::vector<double> truth{1, 1, 1, 1, 1};
    const std::vector<double> est{1.1, 0.9, 1.1, 0.9, 1e6};
    EXPECT_NEAR(rmedse(est, truth).error, 0.1, 1e-12);
}

TEST(Rmedse, TinyTruthIsExcluded) {
    const std::vector<double> truth{0.0, 2.0, 1e-9};
    const std::vector<double> est{5.0, 1.0, 3.0};
    const auto r = rmedse(est, truth);
    EXPECT_EQ(r.excluded, 2u);
    EXPECT_EQ(r.used, 1u);
    EXPECT_DOUBLE_EQ(r.error, 0.5);
    const std::vector<double> zeros{0.0};
    const std::vector<double> any{1.0};
    EXPECT_THROW(rmedse(any, zeros), ContractViolation);
}

TEST(Rmedse, OneStepMonteCarloIsTheEnvironmentReward) {
    algo::Trainer t(tiny("20,5"), "pendulum-swingup", 0);
    t.train();
    const auto pairs = t.sample_batch(buffers::Provenance::environment, 6);
    const auto q = monte_carlo_q(t, pairs, 3, 1, 11);
    const auto task = t.task();
    for (std::size_t i = 0; i < pairs.size; ++i) {
        envs::Environment env(task);
        env.reset_to(task->state_from_observation(pairs.state(i)));
        EXPECT_NEAR(q[i], env.step(pairs.action(i)).reward, 1e-12);
        EXPECT_NEAR(q[i], pairs.rewards[i], 1e-9);
    }
}

TEST(Rmedse, CriticLearningCurveShape) {
    algo::Trainer t(tiny("20,5"), "pendulum-swingup", 0);
    t.train();
    const auto probes = make_probes(t, 8, 4, 30, 1);
    EXPECT_EQ(probes.truth.size(), 8u);
    CriticLearningConfig cc;
    cc.iterations = 20;
    cc.eval_every = 10;
    const auto with = critic_learning_curve(t, probes, true, 0, cc);
    const auto without = critic_learning_curve(t, probes, false, 0, cc);
    ASSERT_EQ(with.size(), 3u);
    ASSERT_EQ(without.size(), 3u);
    EXPECT_EQ(with[2].iteration, 20u);
    EXPECT_TRUE(with[0].with_dr);
    // Same re-initialization seed: identical critics before any training.
    EXPECT_DOUBLE_EQ(with[0].error, without[0].error);
    const auto dir = scratch("rmedse");
    write_rmedse_csv(dir / "r.csv", with);
    EXPECT_EQ(slurp(dir / "r.csv").substr(0, 5), "seed,");
}

TEST(Rmedse, DistributionRolloutsNeedAModel) {
    algo::Trainer t(tiny("0,5"), "pendulum-swingup", 0);
    t.train();
    const auto probes = make_probes(t, 2, 2, 5, 1);
    CriticLearningConfig cc;
    cc.iterations = 2;
    cc.eval_every = 1;
    EXPECT_THROW(critic_learning_curve(t, probes, true, 0, cc), ContractViolation);
}

// ---- config files ----

TEST(ConfigFile, SectionsAndComments) {
    const auto e = parse_config_text(
        "# desk run\n"
        "[algo]\n"
        "gamma = 0.99   # shorter horizon\n"
        "\n"
        "batch_size=64\n"
        "[model]\n"
        "hidden = 32,32\n"
        "[task]\n"
        "episode_length = 100\n");
    ASSERT_EQ(e.size(), 4u);
    EXPECT_EQ(e[0].first, "algo.gamma");
    EXPECT_EQ(e[0].second, "0.99");
    EXPECT_EQ(e[2].first, "model.hidden");
    EXPECT_EQ(e[2].second, "32,32");
    algo::AlgoConfig c;
    apply_entries(c, e);
    EXPECT_DOUBLE_EQ(c.gamma, 0.99);
    EXPECT_EQ(c.batch_size, 64u);
    EXPECT_EQ(c.model.hidden, (std::vector<std::size_t>{32, 32}));
    EXPECT_DOUBLE_EQ(c.task_overrides.at("episode_length"), 100.0);
}

TEST(ConfigFile, MalformedLinesAreRejected) {
    EXPECT_THROW(parse_config_text("gamma 0.9\n"), ContractViolation);
    EXPECT_THROW(split_assignment("novalue"), ContractViolation);
    EXPECT_EQ(split_assignment("algo.gamma=0.9").second, "0.9");
    algo::AlgoConfig c;
    EXPECT_THROW(apply_entries(c, {{"algo.nope", "1"}}), ContractViolation);
}

TEST(ConfigFile, MissingFileIsAnIoError) {
    EXPECT_THROW(read_config_file("/nonexistent/dhmbpo.cfg"), IoError);
}

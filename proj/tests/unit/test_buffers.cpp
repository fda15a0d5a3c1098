#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "dhmbpo/buffers/norm_stats.hpp"
#include "dhmbpo/core/error.hpp"

using namespace dhmbpo;
using namespace dhmbpo::buffers;

namespace {

Transition item(double tag) { return {{tag, -tag}, {0.5}, tag * 10, {tag + 1, -tag}, false, false}; }

}  // namespace

TEST(TransitionBuffer, FifoEviction) {
    auto buf = make_replay_buffer(2, 1, 2);
    buf.push(item(1));
    buf.push(item(2));
    buf.push(item(3));
    ASSERT_EQ(buf.size(), 2u);
    EXPECT_EQ(buf.at(0).state[0], 2);
    EXPECT_EQ(buf.at(1).state[0], 3);
    EXPECT_EQ(buf.sequence_at(0), 1u);
    EXPECT_EQ(buf.sequence_at(1), 2u);
}

TEST(TransitionBuffer, SequenceNumbersTotalOrderUnderWraparound) {
    auto buf = make_replay_buffer(2, 1, 7);
    for (int i = 0; i < 40; ++i) {
        buf.push(item(i));
        for (std::size_t k = 1; k < buf.size(); ++k) ASSERT_EQ(buf.sequence_at(k), buf.sequence_at(k - 1) + 1);
        ASSERT_EQ(buf.sequence_at(buf.size() - 1), static_cast<std::uint64_t>(i));
    }
}

TEST(TransitionBuffer, RejectsNonFinite) {
    auto buf = make_replay_buffer(2, 1, 4);
    Transition t = item(1);
    t.reward = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(buf.push(t), ContractViolation);
    t = item(1);
    t.next_state[1] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(buf.push(t), ContractViolation);
    EXPECT_TRUE(buf.empty());
}

TEST(TransitionBuffer, EmptySampleIsError) {
    auto buf = make_replay_buffer(2, 1, 4);
    Rng rng(0);
    EXPECT_THROW(buf.sample_uniform(1, rng), ContractViolation);
}

TEST(TransitionBuffer, SingleItemAlwaysDrawn) {
    auto buf = make_replay_buffer(2, 1, 4);
    buf.push(item(5));
    Rng rng(0);
    auto b = buf.sample_uniform(100, rng);
    for (std::size_t i = 0; i < b.size; ++i) EXPECT_EQ(b.state(i)[0], 5);
}

TEST(TransitionBuffer, SamplingDeterministicUnderSeed) {
    auto buf = make_replay_buffer(2, 1, 100);
    for (int i = 0; i < 50; ++i) buf.push(item(i));
    Rng a(9), b(9);
    EXPECT_EQ(buf.sample_uniform(64, a).sequence, buf.sample_uniform(64, b).sequence);
}

TEST(TransitionBuffer, SamplingIsUniform) {
    auto buf = make_replay_buffer(2, 1, 10);
    for (int i = 0; i < 10; ++i) buf.push(item(i));
    Rng rng(17);
    const std::size_t draws = 100000;
    std::vector<double> freq(10, 0);
    auto b = buf.sample_uniform(draws, rng);
    for (auto s : b.sequence) freq[s] += 1;
    const double expected = draws / 10.0;
    const double sd = std::sqrt(draws * 0.1 * 0.9);
    double chi2 = 0;
    for (double f : freq) {
        EXPECT_LE(std::abs(f - expected), 5 * sd);
        chi2 += (f - expected) * (f - expected) / expected;
    }
    // 9 degrees of freedom; upper 0.001 quantile.
    EXPECT_LT(chi2, 27.877);
}

TEST(TransitionBuffer, ProvenanceTagsInBatches) {
    auto env = make_replay_buffer(2, 1, 10);
    auto model = make_model_buffer(2, 1, 10);
    env.push(item(1));
    model.push(item(2));
    Rng rng(0);
    for (auto p : env.sample_uniform(5, rng).provenance) EXPECT_EQ(p, Provenance::environment);
    for (auto p : model.sample_uniform(5, rng).provenance) EXPECT_EQ(p, Provenance::model);
    model.clear();
    EXPECT_TRUE(model.empty());
    EXPECT_EQ(model.pushed(), 1u);
}

TEST(TransitionBuffer, DumpRestoreRoundTrip) {
    auto buf = make_model_buffer(2, 1, 5);
    for (int i = 0; i < 8; ++i) buf.push(item(i));
    auto path = std::filesystem::temp_directory_path() / "dhmbpo_buffer_test.bin";
    buf.dump(path);
    auto back = TransitionBuffer::restore(path);
    EXPECT_TRUE(back == buf);
    EXPECT_EQ(back.provenance(), Provenance::model);
    std::filesystem::remove(path);
}

TEST(NormStats, ThreeStates) {
    NormStats stats(1);
    Batch b;
    b.size = 3;
    b.state_dim = b.action_dim = 1;
    b.states = {1, 2, 3};
    b.next_states = {1, 2, 3};
    b.actions = {0, 0, 0};
    b.rewards = {0, 0, 0};
    stats.update(b);
    EXPECT_DOUBLE_EQ(stats.state_mean()[0], 2.0);
    EXPECT_DOUBLE_EQ(stats.state_std()[0], 1.0);  // sample std of {1,2,3}
    EXPECT_EQ(stats.delta_std()[0], kStdFloor);
}

TEST(NormStats, SingleSampleFloorsStd) {
    NormStats stats(2);
    stats.update(item(3));
    EXPECT_EQ(stats.state_std()[0], kStdFloor);
    EXPECT_EQ(stats.reward_std(), kStdFloor);
}

TEST(NormStats, StreamingEqualsTwoPass) {
    Rng rng(4);
    const std::size_t d = 3;
    NormStats stats(d);
    std::vector<double> all;
    for (int chunk = 0; chunk < 20; ++chunk) {
        Batch b;
        b.size = 1 + rng.uniform_index(50);
        b.state_dim = d;
        b.action_dim = 1;
        for (std::size_t i = 0; i < b.size * d; ++i) {
            b.states.push_back(100 + 3 * rng.normal());
            b.next_states.push_back(b.states.back() + rng.normal());
        }
        b.rewards.assign(b.size, 0);
        all.insert(all.end(), b.states.begin(), b.states.end());
        stats.update(b);
    }
    const std::size_t n = all.size() / d;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0;
        for (std::size_t i = 0; i < n; ++i) mean += all[i * d + j];
        mean /= n;
        double ss = 0;
        for (std::size_t i = 0; i < n; ++i) ss += (all[i * d + j] - mean) * (all[i * d + j] - mean);
        const double sd = std::sqrt(ss / (n - 1));
        EXPECT_NEAR(stats.state_mean()[j], mean, 1e-10 * std::abs(mean));
        EXPECT_NEAR(stats.state_std()[j], sd, 1e-10 * sd);
    }
}

TEST(NormStats, NormalizeRoundTrip) {
    NormStats stats;
    stats.set({1.5, -2}, {0.3, 4}, {0.1, 0}, {0.02, 1}, 0.4, 2.5);
    std::vector<double> z{7.25, -3.5}, n(2), back(2);
    stats.normalize_state(z, n);
    stats.denormalize_state(n, back);
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(back[j], z[j], 1e-12 * std::abs(z[j]));
    EXPECT_NEAR(stats.denormalize_reward(stats.normalize_reward(-1.3)), -1.3, 1e-12);
}

TEST(NormalizedSuccessor, MatchedScales) {
    NormStats stats;
    stats.set({0.7}, {2.0}, {0.0}, {2.0}, 0, 1);
    EXPECT_DOUBLE_EQ(stats.normalized_successor(0, 1.25, -0.5), 0.75);
}

TEST(NormalizedSuccessor, HandExample) {
    NormStats stats;
    stats.set({0.0}, {2.0}, {1.0}, {0.5}, 0, 1);
    EXPECT_DOUBLE_EQ(stats.normalized_successor(0, 1.0, 2.0), 2.0);
}

TEST(NormalizedSuccessor, EqualsExplicitPipeline) {
    Rng rng(8);
    for (int trial = 0; trial < 1000; ++trial) {
        NormStats stats;
        const double sm = 5 * rng.normal(), ss = std::exp(rng.normal()), dm = rng.normal(), ds = std::exp(rng.normal());
        stats.set({sm}, {ss}, {dm}, {ds}, 0, 1);
        const double s_bar = rng.normal(), d_bar = rng.normal();
        const double s = sm + ss * s_bar;
        const double delta = dm + ds * d_bar;
        const double explicit_bar = (s + delta - sm) / ss;
        const double closed = stats.normalized_successor(0, s_bar, d_bar);
        EXPECT_NEAR(closed, explicit_bar, 1e-12 * std::max(1.0, std::abs(explicit_bar)));
    }
}

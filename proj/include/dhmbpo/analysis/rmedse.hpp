#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dhmbpo/algo/trainer.hpp"

namespace dhmbpo::analysis {

struct RmedseValue {
    double error = 0;
    std::size_t used = 0;
    std::size_t excluded = 0;  // |truth| below the guard
};

// sqrt(median(((truth - estimate) / truth)^2)) over the pairs with |truth| >= guard.
RmedseValue rmedse(std::span<const double> estimates, std::span<const double> truth, double guard = 1e-8);

// Entropy-augmented Monte-Carlo action value in the real environment:
// mean over rollouts of r_0 + sum_{1<=t<H} g^t (r_t - alpha logp_t), starting
// from the physical state behind each observation with the given first action
// and following the stochastic policy. The time limit is lifted to H steps.
std::vector<double> monte_carlo_q(const algo::Trainer& trainer, const buffers::Batch& pairs, std::size_t rollouts,
                                  std::size_t horizon, std::uint64_t seed);

struct ProbeSet {
    buffers::Batch pairs;
    std::vector<double> truth;
    std::size_t rollouts = 0, horizon = 0;
};

ProbeSet make_probes(const algo::Trainer& trainer, std::size_t probes, std::size_t rollouts, std::size_t horizon,
                     std::uint64_t seed);

struct RmedseRecord {
    std::uint64_t seed = 0;
    bool with_dr = false;
    std::size_t iteration = 0;
    double error = 0;
    std::size_t used = 0, excluded = 0;
};

struct CriticLearningConfig {
    std::size_t iterations = 2000;
    std::size_t eval_every = 100;
    std::uint64_t estimate_seed = 7;  // shared by every evaluation, so curves differ only through the critics
};

// Re-initializes the critics of a frozen trainer and trains them alone with
// batches from D_m (with_dr, refreshed on the usual cadence) or from D_e,
// recording E(i) at i = 0, eval_every, ..., iterations.
std::vector<RmedseRecord> critic_learning_curve(algo::Trainer& trainer, const ProbeSet& probes, bool with_dr,
                                                std::uint64_t seed, const CriticLearningConfig& config);

void write_rmedse_csv(const std::filesystem::path& path, const std::vector<RmedseRecord>& records);

}  // namespace dhmbpo::analysis

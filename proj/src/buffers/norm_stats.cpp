#include "dhmbpo/buffers/norm_stats.hpp"

#include <algorithm>
#include <cmath>

#include "dhmbpo/autodiff/checkpoint.hpp"
#include "dhmbpo/core/error.hpp"

namespace dhmbpo::buffers {

void RunningMoments::update(std::span<const double> rows) {
    const std::size_t d = dim();
    require(d > 0 && rows.size() % d == 0, "RunningMoments::update: ragged input");
    const std::size_t n = rows.size() / d;
    if (n == 0) return;
    // Two-pass moments of the new chunk, then the pairwise merge.
    std::vector<double> mean_b(d, 0.0), m2_b(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean_b[j] += rows[i * d + j];
    for (double& m : mean_b) m /= n;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double e = rows[i * d + j] - mean_b[j];
            m2_b[j] += e * e;
        }
    const double na = count_, nb = static_cast<double>(n), total = na + nb;
    for (std::size_t j = 0; j < d; ++j) {
        const double delta = mean_b[j] - mean_[j];
        mean_[j] += delta * nb / total;
        m2_[j] += m2_b[j] + delta * delta * na * nb / total;
    }
    count_ = total;
}

std::vector<double> RunningMoments::stddev() const {
    std::vector<double> s(dim(), kStdFloor);
    if (count_ < 2) return s;
    for (std::size_t j = 0; j < dim(); ++j) s[j] = std::max(std::sqrt(m2_[j] / (count_ - 1)), kStdFloor);
    return s;
}

void RunningMoments::save(ad::TensorArchive& archive, const std::string& prefix) const {
    archive.put_scalar(prefix + "count", count_);
    std::vector<ad::Scalar> mean(mean_.begin(), mean_.end()), m2(m2_.begin(), m2_.end());
    archive.put(prefix + "mean", {dim()}, mean);
    archive.put(prefix + "m2", {dim()}, m2);
}

void RunningMoments::load(const ad::TensorArchive& archive, const std::string& prefix) {
    count_ = archive.get_scalar(prefix + "count");
    const auto& mean = archive.get(prefix + "mean");
    const auto& m2 = archive.get(prefix + "m2");
    require(mean.values.size() == dim() && m2.values.size() == dim(), "RunningMoments::load: dimension");
    mean_ = mean.values;
    m2_ = m2.values;
}

void NormStats::update(const Batch& batch) {
    require(batch.state_dim == state_dim(), "NormStats::update: state dimension");
    if (batch.size == 0) return;
    std::vector<double> delta(batch.next_states.size());
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = batch.next_states[i] - batch.states[i];
    state_.update(batch.states);
    delta_.update(delta);
    reward_.update(batch.rewards);
    refresh();
}

void NormStats::update(const Transition& t) {
    Batch b;
    b.size = 1;
    b.state_dim = t.state.size();
    b.action_dim = t.action.size();
    b.states = t.state;
    b.next_states = t.next_state;
    b.rewards = {t.reward};
    update(b);
}

void NormStats::refresh() {
    sm_ = state_.mean();
    ss_ = state_.stddev();
    dm_ = delta_.mean();
    ds_ = delta_.stddev();
    rm_ = reward_.mean()[0];
    rs_ = reward_.stddev()[0];
}

void NormStats::set(std::vector<double> state_mean, std::vector<double> state_std, std::vector<double> delta_mean,
                    std::vector<double> delta_std, double reward_mean, double reward_std) {
    const std::size_t d = state_mean.size();
    require(state_std.size() == d && delta_mean.size() == d && delta_std.size() == d,
            "NormStats::set: dimension mismatch");
    for (double s : state_std) require(s > 0, "NormStats::set: std must be positive");
    for (double s : delta_std) require(s > 0, "NormStats::set: std must be positive");
    require(reward_std > 0, "NormStats::set: std must be positive");
    if (state_.dim() != d) *this = NormStats(d);
    sm_ = std::move(state_mean);
    ss_ = std::move(state_std);
    dm_ = std::move(delta_mean);
    ds_ = std::move(delta_std);
    rm_ = reward_mean;
    rs_ = reward_std;
}

void NormStats::normalize_state(std::span<const double> s, std::span<double> out) const {
    for (std::size_t j = 0; j < s.size(); ++j) out[j] = (s[j] - sm_[j]) / ss_[j];
}

void NormStats::denormalize_state(std::span<const double> s, std::span<double> out) const {
    for (std::size_t j = 0; j < s.size(); ++j) out[j] = sm_[j] + ss_[j] * s[j];
}

void NormStats::normalize_delta(std::span<const double> d, std::span<double> out) const {
    for (std::size_t j = 0; j < d.size(); ++j) out[j] = (d[j] - dm_[j]) / ds_[j];
}

void NormStats::denormalize_delta(std::span<const double> d, std::span<double> out) const {
    for (std::size_t j = 0; j < d.size(); ++j) out[j] = dm_[j] + ds_[j] * d[j];
}

void NormStats::normalized_successor(std::span<const double> s_bar, std::span<const double> delta_bar,
                                     std::span<double> out) const {
    for (std::size_t j = 0; j < s_bar.size(); ++j) out[j] = normalized_successor(j, s_bar[j], delta_bar[j]);
}

void NormStats::save(ad::TensorArchive& archive, const std::string& prefix) const {
    state_.save(archive, prefix + "state/");
    delta_.save(archive, prefix + "delta/");
    reward_.save(archive, prefix + "reward/");
    auto put = [&](const std::string& name, const std::vector<double>& v) {
        archive.put(prefix + name, {v.size()}, std::vector<ad::Scalar>(v.begin(), v.end()));
    };
    put("cache/state_mean", sm_);
    put("cache/state_std", ss_);
    put("cache/delta_mean", dm_);
    put("cache/delta_std", ds_);
    archive.put_scalar(prefix + "cache/reward_mean", rm_);
    archive.put_scalar(prefix + "cache/reward_std", rs_);
}

void NormStats::load(const ad::TensorArchive& archive, const std::string& prefix) {
    state_.load(archive, prefix + "state/");
    delta_.load(archive, prefix + "delta/");
    reward_.load(archive, prefix + "reward/");
    sm_ = archive.get(prefix + "cache/state_mean").values;
    ss_ = archive.get(prefix + "cache/state_std").values;
    dm_ = archive.get(prefix + "cache/delta_mean").values;
    ds_ = archive.get(prefix + "cache/delta_std").values;
    rm_ = archive.get_scalar(prefix + "cache/reward_mean");
    rs_ = archive.get_scalar(prefix + "cache/reward_std");
}

}  // namespace dhmbpo::buffers

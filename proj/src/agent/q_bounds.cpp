#include "dhmbpo/agent/q_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dhmbpo/autodiff/checkpoint.hpp"
#include "dhmbpo/core/error.hpp"

namespace dhmbpo::agent {

double percentile(std::span<const double> values, double q) {
    require(!values.empty(), "percentile: empty sample");
    require(q >= 0 && q <= 1, "percentile: q outside [0,1]");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

void QBounds::update(std::span<const double> rewards, double gamma, double eta) {
    require(gamma >= 0 && gamma < 1, "QBounds: gamma must lie in [0,1)");
    require(eta >= 0 && eta <= 1, "QBounds: eta must lie in [0,1]");
    if (rewards.empty()) return;
    const double rl = percentile(rewards, low_q_);
    const double ru = percentile(rewards, high_q_);
    if (!initialized_) {
        r_low_ = rl;
        r_high_ = ru;
        initialized_ = true;
    } else {
        r_low_ = eta * r_low_ + (1 - eta) * rl;
        r_high_ = eta * r_high_ + (1 - eta) * ru;
    }
    q_low_ = r_low_ / (1 - gamma);
    q_high_ = r_high_ / (1 - gamma);
}

double QBounds::clamp(double value) const {
    if (!initialized_) return value;
    return std::clamp(value, q_low_, q_high_);
}

void QBounds::save(ad::TensorArchive& archive, const std::string& prefix) const {
    archive.put_scalar(prefix + "initialized", initialized_ ? 1 : 0);
    archive.put_scalar(prefix + "r_low", r_low_);
    archive.put_scalar(prefix + "r_high", r_high_);
    archive.put_scalar(prefix + "q_low", q_low_);
    archive.put_scalar(prefix + "q_high", q_high_);
}

void QBounds::load(const ad::TensorArchive& archive, const std::string& prefix) {
    initialized_ = archive.get_scalar(prefix + "initialized") != 0;
    r_low_ = archive.get_scalar(prefix + "r_low");
    r_high_ = archive.get_scalar(prefix + "r_high");
    q_low_ = archive.get_scalar(prefix + "q_low");
    q_high_ = archive.get_scalar(prefix + "q_high");
}

}  // namespace dhmbpo::agent

#include "dhmbpo/model/early_stopping.hpp"

#include <cmath>
#include <numbers>

#include "dhmbpo/core/error.hpp"

namespace dhmbpo::model {

ScoreSummary summarize_scores(std::span<const double> scores) {
    ScoreSummary s;
    s.count = scores.size();
    if (s.count == 0) return s;
    for (double v : scores) s.mean += v;
    s.mean /= s.count;
    if (s.count > 1) {
        for (double v : scores) s.variance += (v - s.mean) * (v - s.mean);
        s.variance /= s.count - 1;
    }
    return s;
}

double normal_upper_quantile(double alpha) {
    require(alpha > 0 && alpha < 1, "normal_upper_quantile: alpha outside (0,1)");
    // Bisection on the complementary error function; plenty fast for a constant.
    double lo = -40, hi = 40;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double tail = 0.5 * std::erfc(mid / std::numbers::sqrt2);
        (tail > alpha ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double improvement_z(const ScoreSummary& reference, const ScoreSummary& candidate) {
    require(reference.count > 0 && candidate.count > 0, "improvement_z: empty score set");
    const double n1 = static_cast<double>(reference.count), n2 = static_cast<double>(candidate.count);
    const double dof = n1 + n2 - 2;
    const double pooled = dof > 0 ? ((n1 - 1) * reference.variance + (n2 - 1) * candidate.variance) / dof : 0.0;
    const double se = std::sqrt(pooled * (1 / n1 + 1 / n2));
    const double diff = reference.mean - candidate.mean;
    if (se == 0) return diff > 0 ? INFINITY : (diff < 0 ? -INFINITY : 0.0);
    return diff / se;
}

std::size_t patience_epochs(double base, std::size_t state_dim) {
    require(base > 0 && state_dim > 0, "patience_epochs: invalid arguments");
    const double p = std::ceil(base * std::log(static_cast<double>(state_dim)));
    return p < 1 ? 1 : static_cast<std::size_t>(p);
}

EarlyStopping::EarlyStopping(std::size_t patience, double significance)
    : patience_(patience), z_crit_(normal_upper_quantile(significance)) {
    require(patience > 0, "EarlyStopping: patience must be positive");
}

void EarlyStopping::start(const ScoreSummary& initial) {
    best_ = initial;
    since_improvement_ = 0;
}

bool EarlyStopping::observe(const ScoreSummary& scores) {
    if (improvement_z(best_, scores) > z_crit_) {
        best_ = scores;
        since_improvement_ = 0;
        return true;
    }
    ++since_improvement_;
    return false;
}

}  // namespace dhmbpo::model

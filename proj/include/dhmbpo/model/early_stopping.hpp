#pragma once

#include <cstddef>
#include <span>

namespace dhmbpo::model {

struct ScoreSummary {
    double mean = 0;
    double variance = 0;  // sample variance
    std::size_t count = 0;
};

ScoreSummary summarize_scores(std::span<const double> scores);

// Upper-tail standard normal quantile: P(Z > z) = alpha.
double normal_upper_quantile(double alpha);

// One-sided two-sample Z statistic for "candidate mean is lower than
// reference mean", using the pooled variance.
double improvement_z(const ScoreSummary& reference, const ScoreSummary& candidate);

// ceil(b * ln d_S), at least one epoch.
std::size_t patience_epochs(double base, std::size_t state_dim);

// Tracks the best score distribution seen so far. A new distribution counts
// as an improvement when it is significantly lower than the best one.
class EarlyStopping {
public:
    EarlyStopping(std::size_t patience, double significance);

    // Baseline distribution (the parameters before training).
    void start(const ScoreSummary& initial);
    // Returns true when `scores` improve on the best; updates the counter.
    bool observe(const ScoreSummary& scores);
    bool should_stop() const { return since_improvement_ >= patience_; }

    std::size_t patience() const { return patience_; }
    std::size_t since_improvement() const { return since_improvement_; }
    const ScoreSummary& best() const { return best_; }
    double critical_z() const { return z_crit_; }

private:
    std::size_t patience_;
    double z_crit_;
    ScoreSummary best_;
    std::size_t since_improvement_ = 0;
};

}  // namespace dhmbpo::model

#pragma once

#include <span>
#include <string>

namespace dhmbpo::ad {
class TensorArchive;
}

namespace dhmbpo::agent {

// Percentile with linear interpolation between order statistics, q in [0,1].
double percentile(std::span<const double> values, double q);

// Value bounds derived from low and high reward percentiles:
// Q_l = r_l / (1 - gamma), Q_u = r_u / (1 - gamma).
class QBounds {
public:
    QBounds() = default;
    QBounds(double low_quantile, double high_quantile) : low_q_(low_quantile), high_q_(high_quantile) {}

    // First call sets the bounds, later calls blend: new = eta * old + (1 - eta) * fresh.
    // An empty sample leaves everything unchanged.
    void update(std::span<const double> rewards, double gamma, double eta);

    bool initialized() const { return initialized_; }
    double reward_low() const { return r_low_; }
    double reward_high() const { return r_high_; }
    double q_low() const { return q_low_; }
    double q_high() const { return q_high_; }
    double clamp(double value) const;

    void save(ad::TensorArchive& archive, const std::string& prefix) const;
    void load(const ad::TensorArchive& archive, const std::string& prefix);

private:
    double low_q_ = 0.01, high_q_ = 0.99;
    bool initialized_ = false;
    double r_low_ = 0, r_high_ = 0, q_low_ = 0, q_high_ = 0;
};

}  // namespace dhmbpo::agent

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dhmbpo::analysis {

// Counts for one batch. counts[0] is the underflow bin, counts[bins + 1] the
// overflow bin; the regular bins split [low, high] uniformly.
struct HistogramSnapshot {
    std::size_t tick = 0;
    std::string quantity;
    double low = 0, high = 0;
    std::vector<std::size_t> counts;

    std::size_t bins() const { return counts.size() - 2; }
    std::size_t total() const;
};

// Binning over the running range of everything observed before the current
// batch; the first batch sets the range from its own values. A degenerate
// range is widened to +-0.5 around its value.
class RunningHistogram {
public:
    explicit RunningHistogram(std::string quantity, std::size_t bins = 64);

    HistogramSnapshot observe(std::span<const double> values, std::size_t tick);

    bool has_range() const { return seen_; }
    double running_low() const { return low_; }
    double running_high() const { return high_; }

private:
    std::string quantity_;
    std::size_t bins_;
    bool seen_ = false;
    double low_ = 0, high_ = 0;
};

// Bin index for v: 0 underflow, 1..bins regular, bins + 1 overflow.
std::size_t bin_index(double v, double low, double high, std::size_t bins);

// Long format: tick,quantity,bin,lower,upper,count (underflow lower = -inf,
// overflow upper = inf).
void write_histograms_csv(const std::filesystem::path& path, const std::vector<HistogramSnapshot>& snapshots);

}  // namespace dhmbpo::analysis

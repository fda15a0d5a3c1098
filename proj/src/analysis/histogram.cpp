#include "dhmbpo/analysis/histogram.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dhmbpo/core/error.hpp"

namespace dhmbpo::analysis {

std::size_t HistogramSnapshot::total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
}

RunningHistogram::RunningHistogram(std::string quantity, std::size_t bins)
    : quantity_(std::move(quantity)), bins_(bins) {
    require(bins > 0, "RunningHistogram: bins must be positive");
}

std::size_t bin_index(double v, double low, double high, std::size_t bins) {
    if (v < low) return 0;
    if (v > high) return bins + 1;
    const double width = (high - low) / static_cast<double>(bins);
    const auto k = static_cast<std::size_t>(std::floor((v - low) / width));
    return std::min(k, bins - 1) + 1;
}

HistogramSnapshot RunningHistogram::observe(std::span<const double> values, std::size_t tick) {
    std::vector<double> finite;
    finite.reserve(values.size());
    for (double v : values)
        if (std::isfinite(v)) finite.push_back(v);
    require(finite.size() == values.size(), "RunningHistogram: non-finite value in '" + quantity_ + "'");

    if (!seen_ && !finite.empty()) {
        low_ = *std::min_element(finite.begin(), finite.end());
        high_ = *std::max_element(finite.begin(), finite.end());
        seen_ = true;
    }
    HistogramSnapshot snap;
    snap.tick = tick;
    snap.quantity = quantity_;
    snap.low = low_;
    snap.high = high_;
    if (snap.low == snap.high) {
        snap.low -= 0.5;
        snap.high += 0.5;
    }
    snap.counts.assign(bins_ + 2, 0);
    for (double v : finite) ++snap.counts[bin_index(v, snap.low, snap.high, bins_)];
    for (double v : finite) {
        low_ = std::min(low_, v);
        high_ = std::max(high_, v);
    }
    return snap;
}

void write_histograms_csv(const std::filesystem::path& path, const std::vector<HistogramSnapshot>& snapshots) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "tick,quantity,bin,lower,upper,count\n";
    char buf[160];
    for (const auto& s : snapshots) {
        const std::size_t bins = s.bins();
        const double width = (s.high - s.low) / static_cast<double>(bins);
        for (std::size_t k = 0; k < bins + 2; ++k) {
            const double lo = k == 0 ? -INFINITY : s.low + width * static_cast<double>(k - 1);
            const double hi = k == bins + 1 ? INFINITY : (k == bins ? s.high : s.low + width * static_cast<double>(k));
            std::snprintf(buf, sizeof buf, "%zu,%s,%zu,%.17g,%.17g,%zu\n", s.tick, s.quantity.c_str(), k, lo, hi,
                          s.counts[k]);
            out << buf;
        }
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace dhmbpo::analysis

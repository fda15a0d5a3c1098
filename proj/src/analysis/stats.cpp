#include "dhmbpo/analysis/stats.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <set>

#include "dhmbpo/core/error.hpp"

namespace dhmbpo::analysis {

double mean(std::span<const double> values) {
    require(!values.empty(), "mean: empty input");
    double s = 0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

double median(std::span<const double> values) {
    require(!values.empty(), "median: empty input");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double interquartile_mean(std::span<const double> values) {
    require(!values.empty(), "interquartile_mean: empty input");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const std::size_t cut = v.size() / 4;
    return mean(std::span<const double>(v).subspan(cut, v.size() - 2 * cut));
}

double interpolate(std::span<const double> xs, std::span<const double> ys, double x) {
    require(!xs.empty() && xs.size() == ys.size(), "interpolate: mismatched or empty curve");
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const std::size_t j = static_cast<std::size_t>(it - xs.begin());
    const double t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    return ys[j - 1] + t * (ys[j] - ys[j - 1]);
}

AggregateResult aggregate(const std::vector<Curve>& runs, const std::map<std::string, double>& baselines,
                          std::size_t grid_points) {
    require(grid_points > 0, "aggregate: grid_points must be positive");
    AggregateResult out;
    std::set<std::string> excluded;
    std::vector<std::vector<double>> resampled;
    for (const auto& run : runs) {
        require(!run.steps.empty() && run.steps.size() == run.returns.size(),
                "aggregate: run '" + run.label + "' has an empty or ragged curve");
        const auto it = baselines.find(run.task);
        if (it == baselines.end() || it->second == 0 || !std::isfinite(it->second)) {
            if (excluded.insert(run.task).second)
                spdlog::warn("aggregate: no usable baseline for task '{}'; its runs are excluded", run.task);
            continue;
        }
        const double last = run.steps.back();
        require(last > 0, "aggregate: run '" + run.label + "' ends at step 0");
        std::vector<double> x(run.steps.size()), y(run.returns.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = run.steps[i] / last;
            y[i] = run.returns[i] / it->second;
        }
        std::vector<double> grid(grid_points);
        for (std::size_t k = 0; k < grid_points; ++k)
            grid[k] = interpolate(x, y, static_cast<double>(k + 1) / static_cast<double>(grid_points));
        resampled.push_back(std::move(grid));
    }
    out.excluded_tasks.assign(excluded.begin(), excluded.end());
    if (resampled.empty()) return out;
    for (std::size_t k = 0; k < grid_points; ++k) {
        std::vector<double> column;
        for (const auto& r : resampled) column.push_back(r[k]);
        AggregateRow row;
        row.step_fraction = static_cast<double>(k + 1) / static_cast<double>(grid_points);
        row.mean = mean(column);
        row.median = median(column);
        row.iqm = interquartile_mean(column);
        row.runs = column.size();
        out.rows.push_back(row);
    }
    return out;
}

}  // namespace dhmbpo::analysis

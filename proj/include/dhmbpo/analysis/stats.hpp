#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace dhmbpo::analysis {

double mean(std::span<const double> values);
double median(std::span<const double> values);
// Mean of what is left after dropping floor(n/4) values from each end.
double interquartile_mean(std::span<const double> values);

// One learning curve: evaluation steps and test returns.
struct Curve {
    std::string task;
    std::string label;  // run identifier, for messages only
    std::vector<double> steps, returns;
};

struct AggregateRow {
    double step_fraction = 0;
    double mean = 0, median = 0, iqm = 0;
    std::size_t runs = 0;
};

struct AggregateResult {
    std::vector<AggregateRow> rows;
    std::vector<std::string> excluded_tasks;  // no (usable) baseline
};

// Steps are divided by each run's final step and returns by the task's
// baseline final return; curves are linearly resampled at k / grid_points,
// k = 1..grid_points (held constant before the first evaluation), then
// summarized across all remaining runs.
AggregateResult aggregate(const std::vector<Curve>& runs, const std::map<std::string, double>& baselines,
                          std::size_t grid_points = 20);

// Linear interpolation of (xs, ys) at x, clamped to the end values.
double interpolate(std::span<const double> xs, std::span<const double> ys, double x);

}  // namespace dhmbpo::analysis

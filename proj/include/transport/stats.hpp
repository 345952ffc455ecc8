#pragma once

#include <span>
#include <vector>

namespace transport {

double mean(std::span<const double> values);

// Unbiased (n - 1) sample variance. Requires at least two values.
double sample_variance(std::span<const double> values);

// Linear interpolation between order statistics (Hyndman-Fan type 7, the R default).
// `sorted` must be ascending and non-empty; p in [0, 1].
double quantile_type7(std::span<const double> sorted, double p);

// Standard normal quantile.
double normal_quantile(double p);

}  // namespace transport

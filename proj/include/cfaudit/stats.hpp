#pragma once

#include <span>
#include <vector>

namespace cfaudit::stats {

double mean(std::span<const double> v);
// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_sd(std::span<const double> v);

// Linear interpolation between order statistics (the common "type 7" rule).
// Throws DataError on empty input.
double quantile(std::vector<double> v, double q);
double quantile_sorted(std::span<const double> sorted, double q);

double pearson(std::span<const double> a, std::span<const double> b);
// Pearson correlation of average ranks.
double spearman(std::span<const double> a, std::span<const double> b);
std::vector<double> ranks(std::span<const double> v);

}  // namespace cfaudit::stats

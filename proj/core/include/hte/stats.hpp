#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

namespace hte::stats {

double mean(std::span<const double> values);

/// Sample variance with the (n - 1) denominator; 0 for fewer than 2 values.
double sample_variance(std::span<const double> values);
double sample_sd(std::span<const double> values);
double population_sd(std::span<const double> values);

/// Pearson correlation; nullopt when either vector is constant or the
/// lengths are below 2.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Two-sided p-value of a Student t statistic.
double t_two_sided_p(double t, double df);

/// One-sample two-sided t-test of mean(values) == 0. Returns 1 when fewer
/// than two values are available (no evidence either way).
double one_sample_t_p(std::span<const double> values);

/// Welch's unequal-variance two-sample two-sided t-test.
double welch_t_p(std::span<const double> a, std::span<const double> b);

/// Exact two-sided binomial test of `successes` out of `trials` against
/// success probability `p0` (sums outcomes no more likely than the observed).
double binomial_two_sided_p(std::size_t successes, std::size_t trials, double p0);

/// Shortest decimal rendering that round-trips to the same double.
std::string format_double(double value);

}  // namespace hte::stats

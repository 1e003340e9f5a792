#include "hte/stats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "hte/error.hpp"

namespace hte::stats {

double mean(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::kEmpty, "mean of empty sample");
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (const double v : values) ss += (v - m) * (v - m);
  return ss / static_cast<double>(values.size() - 1);
}

double sample_sd(std::span<const double> values) {
  return std::sqrt(sample_variance(values));
}

double population_sd(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (const double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    fail(ErrorCode::kLengthMismatch, "pearson: vectors differ in length");
  }
  if (x.size() < 2) return std::nullopt;
  // Exact constancy check; a computed mean can leave rounding residue.
  const auto [xlo, xhi] = std::minmax_element(x.begin(), x.end());
  const auto [ylo, yhi] = std::minmax_element(y.begin(), y.end());
  if (*xlo == *xhi || *ylo == *yhi) return std::nullopt;
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double t_two_sided_p(double t, double df) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))));
}

double one_sample_t_p(std::span<const double> values) {
  if (values.size() < 2) return 1.0;
  const double m = mean(values);
  const double sd = sample_sd(values);
  if (sd == 0.0) return m == 0.0 ? 1.0 : 0.0;
  const double t = m / (sd / std::sqrt(static_cast<double>(values.size())));
  return t_two_sided_p(t, static_cast<double>(values.size() - 1));
}

double welch_t_p(std::span<const double> a, std::span<const double> b) {
  const double va = sample_variance(a) / static_cast<double>(a.size());
  const double vb = sample_variance(b) / static_cast<double>(b.size());
  const double diff = mean(b) - mean(a);
  const double se2 = va + vb;
  if (se2 == 0.0) return diff == 0.0 ? 1.0 : 0.0;
  const double t = diff / std::sqrt(se2);
  const double df =
      se2 * se2 / (va * va / static_cast<double>(a.size() - 1) +
                   vb * vb / static_cast<double>(b.size() - 1));
  return t_two_sided_p(t, df);
}

double binomial_two_sided_p(std::size_t successes, std::size_t trials, double p0) {
  if (trials == 0) return 1.0;
  if (p0 <= 0.0) return successes == 0 ? 1.0 : 0.0;
  if (p0 >= 1.0) return successes == trials ? 1.0 : 0.0;
  const boost::math::binomial dist(static_cast<double>(trials), p0);
  const double observed = boost::math::pdf(dist, static_cast<double>(successes));
  const double bound = observed * (1.0 + 1e-7);
  double p = 0.0;
  for (std::size_t i = 0; i <= trials; ++i) {
    const double d = boost::math::pdf(dist, static_cast<double>(i));
    if (d <= bound) p += d;
  }
  return std::min(1.0, p);
}

std::string format_double(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

}  // namespace hte::stats

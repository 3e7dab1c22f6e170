#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace inkmark {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;

  bool contains(double x) const noexcept { return lower <= x && x <= upper; }
};

/// Integer acceptance region [lower, upper] for a count.
struct CountInterval {
  std::uint64_t lower = 0;
  std::uint64_t upper = 0;

  bool contains(std::uint64_t k) const noexcept { return lower <= k && k <= upper; }
};

/// P(Z >= z) for a standard normal Z.
double normal_upper_tail(double z);

/// Two-sided standard-normal critical value for the given confidence level.
double normal_critical_value(double confidence);

/// Wilson score interval for a binomial proportion.
Interval wilson_interval(std::size_t successes, std::size_t trials, double confidence = 0.95);

/// P(X >= k) for X ~ Binomial(n, p).
double binomial_upper_tail(std::uint64_t k, std::uint64_t n, double p);

/// Central acceptance region holding at least `confidence` of Binomial(n, p).
CountInterval binomial_acceptance(std::uint64_t n, double p, double confidence);

/// Central acceptance region holding at least `confidence` of Poisson(mean).
CountInterval poisson_acceptance(double mean, double confidence);

/// P(G >= x) for G ~ Gamma(shape, 1).
double gamma_upper_tail(double shape, double x);

/// x with P(G >= x) = tail for G ~ Gamma(shape, 1).
double gamma_upper_quantile(double shape, double tail);

/// P(X >= statistic) for X ~ chi-square(dof).
double chi_square_upper_tail(double statistic, double dof);

/// Pearson statistic sum (o - e)^2 / e over cells with e > 0.
double chi_square_statistic(std::span<const double> observed, std::span<const double> expected);

/// Kolmogorov-Smirnov statistic of `sample` against Uniform[0, 1).
double ks_uniform_statistic(std::vector<double> sample);

/// Asymptotic p-value of a one-sample KS statistic on n observations.
double ks_p_value(double statistic, std::size_t n);

/// Percentile interval over bootstrap replicates (linear interpolation
/// between order statistics).
Interval percentile_interval(std::vector<double> replicates, double confidence);

double mean(std::span<const double> values);

}  // namespace inkmark

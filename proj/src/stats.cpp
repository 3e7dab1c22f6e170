#include "inkmark/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numeric>

#include "inkmark/error.hpp"

namespace inkmark {

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double normal_critical_value(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw ParameterError("confidence must lie in (0, 1)");
  const boost::math::normal_distribution<double> n01;
  return boost::math::quantile(boost::math::complement(n01, (1.0 - confidence) / 2.0));
}

Interval wilson_interval(std::size_t successes, std::size_t trials, double confidence) {
  if (trials == 0) return {0.0, 1.0};
  const double z = normal_critical_value(confidence);
  const double n = static_cast<double>(trials);
  const double phat = static_cast<double>(successes) / n;
  const double denom = 1.0 + z * z / n;
  const double centre = (phat + z * z / (2.0 * n)) / denom;
  const double half = z * std::sqrt(phat * (1.0 - phat) / n + z * z / (4.0 * n * n)) / denom;
  // The bounds are exact at the ends; the formula leaves rounding residue.
  const double lower = successes == 0 ? 0.0 : std::max(0.0, centre - half);
  const double upper = successes == trials ? 1.0 : std::min(1.0, centre + half);
  return {lower, upper};
}

double binomial_upper_tail(std::uint64_t k, std::uint64_t n, double p) {
  if (k == 0) return 1.0;
  if (k > n) return 0.0;
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  // P(X >= k) = I_p(k, n - k + 1)
  return boost::math::ibeta(static_cast<double>(k), static_cast<double>(n - k + 1), p);
}

namespace {

template <class Distribution>
CountInterval central_region(const Distribution& d, double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw ParameterError("confidence must lie in (0, 1)");
  const double alpha = (1.0 - confidence) / 2.0;
  // Largest lower bound with P(X < lower) <= alpha, smallest upper bound with P(X > upper) <= alpha.
  std::uint64_t lower = 0;
  while (boost::math::cdf(d, static_cast<double>(lower)) <= alpha) ++lower;
  std::uint64_t upper = lower;
  while (boost::math::cdf(boost::math::complement(d, static_cast<double>(upper))) > alpha) ++upper;
  return {lower, upper};
}

}  // namespace

CountInterval binomial_acceptance(std::uint64_t n, double p, double confidence) {
  const boost::math::binomial_distribution<double> d(static_cast<double>(n), p);
  return central_region(d, confidence);
}

CountInterval poisson_acceptance(double mean, double confidence) {
  const boost::math::poisson_distribution<double> d(mean);
  return central_region(d, confidence);
}

double gamma_upper_tail(double shape, double x) {
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(shape, x);
}

double gamma_upper_quantile(double shape, double tail) {
  if (!(tail > 0.0 && tail <= 1.0)) throw ParameterError("tail probability must lie in (0, 1]");
  return boost::math::gamma_q_inv(shape, tail);
}

double chi_square_upper_tail(double statistic, double dof) {
  return gamma_upper_tail(dof / 2.0, statistic / 2.0);
}

double chi_square_statistic(std::span<const double> observed, std::span<const double> expected) {
  if (observed.size() != expected.size()) throw ParameterError("chi-square: size mismatch");
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] > 0.0) {
      const double d = observed[i] - expected[i];
      stat += d * d / expected[i];
    }
  }
  return stat;
}

double ks_uniform_statistic(std::vector<double> sample) {
  if (sample.empty()) throw ParameterError("KS: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double x = sample[i];
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - x, x - static_cast<double>(i) / n});
  }
  return d;
}

double ks_p_value(double statistic, std::size_t n) {
  // Stephens' small-sample correction of the Kolmogorov limiting law.
  const double sn = std::sqrt(static_cast<double>(n));
  const double t = (sn + 0.12 + 0.11 / sn) * statistic;
  if (t < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * t * t);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

Interval percentile_interval(std::vector<double> replicates, double confidence) {
  if (replicates.empty()) throw ParameterError("percentile interval of no replicates");
  std::sort(replicates.begin(), replicates.end());
  const double alpha = (1.0 - confidence) / 2.0;
  const auto at = [&](double q) {
    const double pos = q * static_cast<double>(replicates.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return replicates[lo] + frac * (replicates[hi] - replicates[lo]);
  };
  return {at(alpha), at(1.0 - alpha)};
}

double mean(std::span<const double> values) {
  if (values.empty()) throw ParameterError("mean of an empty sequence");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

}  // namespace inkmark

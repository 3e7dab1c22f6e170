#include "inkmark/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "inkmark/error.hpp"

namespace inkmark {

std::string_view to_string(EntropyUnit unit) {
  switch (unit) {
    case EntropyUnit::BitsPerToken:
      return "bits_per_token";
    case EntropyUnit::NatsPerToken:
      return "nats_per_token";
    case EntropyUnit::BitsPerCharacter:
      return "bits_per_character";
  }
  return "unknown";
}

std::string_view to_string(EntropyEstimator estimator) {
  return estimator == EntropyEstimator::Exact ? "exact" : "matchlength";
}

double shannon_information(const TokenDistribution& p, TokenId x) {
  if (x >= p.size()) throw ValidationError("token id outside distribution support");
  if (p[x] <= 0.0) throw ValidationError("zero-probability outcome");
  return -std::log2(p[x]);
}

double shannon_entropy(const TokenDistribution& p) {
  double h = 0.0;
  for (const double v : p.probabilities()) {
    if (v > 0.0) h -= v * std::log2(v);
  }
  return std::max(0.0, h);
}

double shannon_entropy_nats(const TokenDistribution& p) { return shannon_entropy(p) * std::log(2.0); }

double average_entropy(std::span<const TokenDistribution> ps) {
  if (ps.empty()) throw ParameterError("average entropy of an empty sequence");
  double sum = 0.0;
  for (const auto& p : ps) sum += shannon_entropy(p);
  return sum / static_cast<double>(ps.size());
}

double spike_entropy(const TokenDistribution& p, double modulus) {
  if (!(modulus > 0.0)) throw ParameterError("spike modulus must be > 0");
  double s = 0.0;
  for (const double v : p.probabilities()) s += v / (1.0 + modulus * v);
  return s;
}

double average_spike_entropy(std::span<const TokenDistribution> ps, double modulus) {
  if (ps.empty()) throw ParameterError("average spike entropy of an empty sequence");
  double sum = 0.0;
  for (const auto& p : ps) sum += spike_entropy(p, modulus);
  return sum / static_cast<double>(ps.size());
}

namespace {

/// Prefix-doubling suffix array.
std::vector<std::uint32_t> suffix_array(std::span<const std::uint32_t> s) {
  const std::size_t n = s.size();
  std::vector<std::uint32_t> sa(n);
  std::vector<std::uint32_t> rank(n);
  std::vector<std::uint32_t> tmp(n);
  std::iota(sa.begin(), sa.end(), 0U);

  // Initial ranks: dense relabelling of the symbols.
  std::vector<std::uint32_t> sorted(s.begin(), s.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (std::size_t i = 0; i < n; ++i) {
    rank[i] = static_cast<std::uint32_t>(std::lower_bound(sorted.begin(), sorted.end(), s[i]) - sorted.begin());
  }

  for (std::size_t k = 1;; k <<= 1) {
    const auto key = [&](std::uint32_t i) {
      const std::int64_t second = i + k < n ? static_cast<std::int64_t>(rank[i + k]) : -1;
      return std::pair<std::int64_t, std::int64_t>(rank[i], second);
    };
    std::sort(sa.begin(), sa.end(), [&](std::uint32_t a, std::uint32_t b) { return key(a) < key(b); });
    tmp[sa[0]] = 0;
    for (std::size_t r = 1; r < n; ++r) {
      tmp[sa[r]] = tmp[sa[r - 1]] + (key(sa[r - 1]) < key(sa[r]) ? 1 : 0);
    }
    rank.swap(tmp);
    if (rank[sa[n - 1]] == n - 1 || k >= n) break;
  }
  return sa;
}

/// Kasai: lcp[r] = LCP(sa[r - 1], sa[r]); lcp[0] = 0.
std::vector<std::uint32_t> lcp_array(std::span<const std::uint32_t> s, const std::vector<std::uint32_t>& sa,
                                     const std::vector<std::uint32_t>& rank) {
  const std::size_t n = s.size();
  std::vector<std::uint32_t> lcp(n, 0);
  std::size_t h = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (rank[i] == 0) {
      h = 0;
      continue;
    }
    const std::size_t j = sa[rank[i] - 1];
    while (i + h < n && j + h < n && s[i + h] == s[j + h]) ++h;
    lcp[rank[i]] = static_cast<std::uint32_t>(h);
    if (h > 0) --h;
  }
  return lcp;
}

/// Range-minimum over a fixed array.
class MinTree {
 public:
  explicit MinTree(const std::vector<std::uint32_t>& values) : size_(values.size()), tree_(2 * values.size()) {
    std::copy(values.begin(), values.end(), tree_.begin() + static_cast<std::ptrdiff_t>(size_));
    for (std::size_t i = size_ - 1; i > 0; --i) tree_[i] = std::min(tree_[2 * i], tree_[2 * i + 1]);
  }

  /// min over [lo, hi).
  std::uint32_t query(std::size_t lo, std::size_t hi) const {
    std::uint32_t out = std::numeric_limits<std::uint32_t>::max();
    for (lo += size_, hi += size_; lo < hi; lo >>= 1, hi >>= 1) {
      if (lo & 1) out = std::min(out, tree_[lo++]);
      if (hi & 1) out = std::min(out, tree_[--hi]);
    }
    return out;
  }

 private:
  std::size_t size_;
  std::vector<std::uint32_t> tree_;
};

}  // namespace

std::vector<std::size_t> match_lengths(std::span<const std::uint32_t> symbols) {
  const std::size_t n = symbols.size();
  if (n < 2) return {};
  const auto sa = suffix_array(symbols);
  std::vector<std::uint32_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[sa[r]] = static_cast<std::uint32_t>(r);
  const MinTree lcp(lcp_array(symbols, sa, rank));

  // Longest match of suffix i against any earlier suffix is attained at its
  // nearest earlier neighbours in suffix order.
  std::vector<std::size_t> out;
  out.reserve(n - 1);
  std::set<std::uint32_t> seen{rank[0]};
  for (std::size_t i = 1; i < n; ++i) {
    const std::uint32_t r = rank[i];
    std::size_t longest = 0;
    const auto next = seen.upper_bound(r);
    if (next != seen.end()) longest = std::max<std::size_t>(longest, lcp.query(r + 1, *next + 1));
    if (next != seen.begin()) {
      const std::uint32_t prev = *std::prev(next);
      longest = std::max<std::size_t>(longest, lcp.query(prev + 1, r + 1));
    }
    out.push_back(std::min(longest + 1, n - i));
    seen.insert(r);
  }
  return out;
}

EntropyEstimate estimate_entropy_rate(std::span<const std::uint32_t> symbols) {
  if (symbols.size() < 2) throw ValidationError("entropy estimation needs at least 2 characters");
  const auto lambdas = match_lengths(symbols);
  const double sum = std::accumulate(lambdas.begin(), lambdas.end(), 0.0,
                                     [](double acc, std::size_t v) { return acc + static_cast<double>(v); });
  const double n = static_cast<double>(symbols.size());
  return {n * std::log2(n) / sum, EntropyUnit::BitsPerCharacter, EntropyEstimator::MatchLength, symbols.size()};
}

std::vector<std::uint32_t> utf8_code_points(std::string_view text) {
  constexpr std::uint32_t kInvalidBase = 0x110000;
  std::vector<std::uint32_t> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + len <= text.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
      } else {
        cp = (cp << 6) | (b & 0x3F);
      }
    }
    if (ok) {
      out.push_back(cp);
      i += len;
    } else {
      out.push_back(kInvalidBase + b0);
      i += 1;
    }
  }
  return out;
}

EntropyEstimate estimate_entropy_rate(std::string_view text) {
  const auto cps = utf8_code_points(text);
  return estimate_entropy_rate(std::span<const std::uint32_t>(cps));
}

}  // namespace inkmark

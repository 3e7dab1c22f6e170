#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "inkmark/tokens.hpp"

namespace inkmark {

enum class EntropyUnit { BitsPerToken, NatsPerToken, BitsPerCharacter };
enum class EntropyEstimator { Exact, MatchLength };

std::string_view to_string(EntropyUnit unit);
std::string_view to_string(EntropyEstimator estimator);

struct EntropyEstimate {
  double value = 0.0;
  EntropyUnit unit = EntropyUnit::BitsPerCharacter;
  EntropyEstimator estimator = EntropyEstimator::MatchLength;
  std::size_t n_samples = 0;
};

/// log2(1 / p(x)). Throws ValidationError("zero-probability outcome").
double shannon_information(const TokenDistribution& p, TokenId x);

/// -sum p log2 p with 0 log 0 = 0.
double shannon_entropy(const TokenDistribution& p);
double shannon_entropy_nats(const TokenDistribution& p);

/// Mean Shannon entropy (bits). Throws ParameterError on an empty sequence.
double average_entropy(std::span<const TokenDistribution> ps);

/// sum p(x) / (1 + z p(x)).
double spike_entropy(const TokenDistribution& p, double modulus);
double average_spike_entropy(std::span<const TokenDistribution> ps, double modulus);

/// Match lengths of the increasing-window estimator. Entry i-1 holds, for
/// position i in [1, n), the length of the shortest substring starting at i
/// that does not start anywhere in [0, i), capped at the remaining length
/// n - i. Position 0 is skipped.
std::vector<std::size_t> match_lengths(std::span<const std::uint32_t> symbols);

/// n log2 n / sum of match_lengths(symbols). Throws ValidationError when
/// fewer than 2 symbols are given.
EntropyEstimate estimate_entropy_rate(std::span<const std::uint32_t> symbols);

/// Decodes UTF-8 into code points (invalid bytes stand for themselves, offset
/// past the Unicode range) and estimates bits per character.
EntropyEstimate estimate_entropy_rate(std::string_view text);

std::vector<std::uint32_t> utf8_code_points(std::string_view text);

}  // namespace inkmark

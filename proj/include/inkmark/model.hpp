#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "inkmark/rng.hpp"
#include "inkmark/tokens.hpp"
#include "json.hpp"

namespace inkmark {

/// An autoregressive source: maps a generation context to the distribution
/// of the next token.
class TokenModel {
 public:
  virtual ~TokenModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual TokenDistribution next_distribution(const GenerationContext& context) const = 0;
};

/// Additive-smoothed n-gram model over a corpus-built vocabulary.
///
/// The next-token distribution conditions on the last (order - 1) tokens of
/// the history, or on the whole history when it is shorter:
///   P(w | c) = (count(c, w) + alpha) / (count(c) + alpha * |V|)
class NgramModel final : public TokenModel {
 public:
  static constexpr int kFormatVersion = 1;
  static constexpr double kDefaultSmoothing = 0.01;

  /// Each document is tokenized separately; n-grams never span documents.
  /// Throws ValidationError if no tokens remain after tokenization and
  /// ParameterError for order < 1 or smoothing <= 0.
  static NgramModel train(std::span<const std::string> documents, int order,
                          double smoothing = kDefaultSmoothing,
                          TokenizerMode tokenizer = TokenizerMode::Word);

  std::size_t vocab_size() const override { return vocabulary_.size(); }
  TokenDistribution next_distribution(const GenerationContext& context) const override;

  int order() const noexcept { return order_; }
  double smoothing() const noexcept { return smoothing_; }
  TokenizerMode tokenizer() const noexcept { return tokenizer_; }
  const Vocabulary& vocabulary() const noexcept { return vocabulary_; }

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  /// {format, version, order, smoothing, tokenizer, vocabulary, counts}
  nlohmann::json to_json() const;
  static NgramModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static NgramModel load(const std::filesystem::path& path);

 private:
  struct ContextCounts {
    std::uint64_t total = 0;
    std::map<TokenId, std::uint64_t> next;
  };

  NgramModel(Vocabulary vocabulary, int order, double smoothing, TokenizerMode tokenizer)
      : vocabulary_(std::move(vocabulary)), order_(order), smoothing_(smoothing), tokenizer_(tokenizer) {}

  Vocabulary vocabulary_;
  int order_;
  double smoothing_;
  TokenizerMode tokenizer_;
  std::map<std::vector<TokenId>, ContextCounts> counts_;
};

enum class PeakPlacement {
  /// The peak always sits on the designated token.
  Fixed,
  /// The peak sits on (last token + 1) mod vocab_size, and on the designated
  /// token when the history is empty. Every step has the same distribution
  /// up to relabelling, but bigrams rarely repeat.
  Successor,
};

std::string_view to_string(PeakPlacement placement);
PeakPlacement peak_placement_from_string(std::string_view name);

/// Mass `peak_mass` on one token, the rest spread uniformly over the other
/// vocab_size - 1 tokens.
class SyntheticModel final : public TokenModel {
 public:
  /// Throws ParameterError unless peak_mass lies in [1/vocab_size, 1].
  SyntheticModel(double peak_mass, std::size_t vocab_size, TokenId designated = 0,
                 PeakPlacement placement = PeakPlacement::Fixed);

  std::size_t vocab_size() const override { return vocab_size_; }
  TokenDistribution next_distribution(const GenerationContext& context) const override;

  double peak_mass() const noexcept { return peak_mass_; }
  TokenId designated() const noexcept { return designated_; }
  PeakPlacement placement() const noexcept { return placement_; }
  /// The distribution with the peak on the designated token.
  const TokenDistribution& distribution() const noexcept { return distribution_; }

  /// Closed forms, evaluated termwise on the two mass levels.
  double shannon_entropy_bits() const;
  double spike_entropy(double modulus) const;

  /// Peak mass whose Shannon entropy equals `bits`; bisection on the
  /// monotone map peak_mass -> entropy.
  static double peak_mass_for_entropy(double bits, std::size_t vocab_size);
  /// Peak mass whose spike entropy (modulus z) equals `target`. Throws
  /// ParameterError naming the reachable range when out of reach.
  static double peak_mass_for_spike_entropy(double target, double modulus, std::size_t vocab_size);

 private:
  double peak_mass_;
  std::size_t vocab_size_;
  TokenId designated_;
  PeakPlacement placement_;
  TokenDistribution distribution_;
};

/// Inverse-CDF draw: the first index whose cumulative mass exceeds u.
/// Falls back to the last index with positive mass if rounding leaves u
/// beyond the total.
TokenId sample_from(std::span<const double> probabilities, double u);

/// One generation step: chooses the next token given the model's
/// distribution. Plain sampling and watermark injectors implement this.
class Sampler {
 public:
  virtual ~Sampler() = default;
  virtual TokenId next(const TokenDistribution& p, const GenerationContext& context) = 0;
};

class PlainSampler final : public Sampler {
 public:
  explicit PlainSampler(Rng& rng) : rng_(&rng) {}
  TokenId next(const TokenDistribution& p, const GenerationContext& context) override;

 private:
  Rng* rng_;
};

/// Sees the model's (pre-injection) distribution and the emitted token at
/// every step.
using StepObserver = std::function<void(const TokenDistribution& p, TokenId emitted)>;

/// Autoregressive generation of at most max_len tokens; stops after
/// emitting `terminal`.
std::vector<TokenId> generate(const TokenModel& model, std::span<const TokenId> prompt, Sampler& sampler,
                              std::size_t max_len, std::optional<TokenId> terminal = std::nullopt,
                              const StepObserver& observer = {});

}  // namespace inkmark

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "inkmark/model.hpp"
#include "inkmark/prf.hpp"
#include "json.hpp"

namespace inkmark {

/// Fixed-width, most-significant-bit-first encoding of token ids. Tokens
/// whose encoding extends a bit prefix form the contiguous id range
/// [prefix << rest, (prefix + 1) << rest).
class BinaryCodec {
 public:
  /// bits_per_token = ceil(log2 vocab_size); vocab_size >= 2.
  explicit BinaryCodec(std::size_t vocab_size);

  std::size_t vocab_size() const noexcept { return vocab_size_; }
  std::size_t bits_per_token() const noexcept { return bits_; }

  /// Bit j (0 = most significant) of the encoding of `token`.
  int bit(TokenId token, std::size_t j) const noexcept {
    return static_cast<int>((token >> (bits_ - 1 - j)) & 1U);
  }
  std::vector<std::uint8_t> encode(TokenId token) const;
  /// Throws ValidationError for a wrong length or an id outside the vocabulary.
  TokenId decode(std::span<const std::uint8_t> bits) const;

 private:
  std::size_t vocab_size_;
  std::size_t bits_;
};

/// Probability that the next bit is 1 given the bits already fixed.
/// Throws ValidationError when the prefix carries no probability mass.
double bit_probability(const TokenDistribution& p, const BinaryCodec& codec, std::span<const std::uint8_t> prefix);

/// 1 iff u < p1.
int sample_bit(double p1, double u);

/// ln(1/u) for bit 1, ln(1/(1-u)) for bit 0, in nats. Throws
/// ValidationError("degenerate draw") unless 0 < u < 1.
double score_bit(int bit, double u);

/// E[score_bit] for a watermarked bit with P(1) = p: 1 + binary entropy (nats).
double expected_watermarked_score(double p);

struct BinaryWatermarkState {
  double lambda = 64.0;
  /// Information content (nats) of the bits realised before activation.
  double accumulated_information = 0.0;
  bool activated = false;
  /// Number of generated tokens in the seeding segment, once activated.
  std::optional<std::size_t> activation_index;

  nlohmann::json to_json() const;
};

/// Entropy-gated injector. Bits are drawn with true randomness until the
/// realised information reaches lambda at a token boundary. From then on the
/// draw for bit j of token i is prf(segment ∥ i * bits_per_token + j), with
/// segment the generated tokens up to activation.
class BinaryInjector final : public Sampler {
 public:
  static constexpr double kDefaultLambda = 64.0;

  /// Throws ParameterError unless lambda > 0 and the key is a Binary key.
  BinaryInjector(const WatermarkKey& key, BinaryCodec codec, double lambda, Rng& true_randomness);
  BinaryInjector(const BinaryInjector&) = delete;
  BinaryInjector& operator=(const BinaryInjector&) = delete;

  TokenId next(const TokenDistribution& p, const GenerationContext& context) override;

  const BinaryWatermarkState& state() const noexcept { return state_; }

 private:
  Prf prf_;
  BinaryCodec codec_;
  BinaryWatermarkState state_;
  Rng* rng_;
  std::vector<TokenId> segment_;
  std::optional<Prf::PrefixStream> stream_;
};

struct BinaryGeneration {
  std::vector<TokenId> tokens;
  BinaryWatermarkState state;
};

BinaryGeneration inject_binary(const TokenModel& model, std::span<const TokenId> prompt, const WatermarkKey& key,
                               const BinaryCodec& codec, double lambda, Rng& true_randomness, std::size_t max_len,
                               std::optional<TokenId> terminal = std::nullopt);

/// Score of the text's remaining bits under one candidate seeding prefix.
struct PrefixScore {
  std::size_t prefix_index = 0;
  std::size_t bits_scored = 0;
  /// Sum of score_bit over the scored bits.
  double raw_score = 0.0;
  /// raw_score - bits_scored: zero-mean on unwatermarked text.
  double centered_score = 0.0;
};

struct BinaryDetection {
  std::size_t best_prefix_index = 0;
  std::size_t bits_scored = 0;
  double centered_score = 0.0;
  double threshold = 0.0;
  bool verdict = false;
  /// Bonferroni-adjusted tail probability of the best prefix under the
  /// Gamma(bits, 1) null of the raw score.
  double p_value = 1.0;

  nlohmann::json to_json() const;
};

/// Centered-score threshold for a prefix scoring `bits` bits, set so that a
/// scan over `prefixes` candidates has false positive rate <= fpr: the
/// upper fpr/prefixes quantile of Gamma(bits, 1), minus bits.
double calibrated_threshold(std::size_t bits, std::size_t prefixes, double fpr);

class BinaryDetector {
 public:
  static constexpr double kDefaultFpr = 1e-3;

  BinaryDetector(const WatermarkKey& key, BinaryCodec codec);

  PrefixScore score_prefix(std::span<const TokenId> text, std::size_t prefix_index) const;
  /// Every prefix t = 1 .. n-1.
  std::vector<PrefixScore> scan(std::span<const TokenId> text) const;

  /// Fixed centered-score threshold: verdict iff some prefix reaches it;
  /// reports the prefix with the largest centered score.
  BinaryDetection detect(std::span<const TokenId> text, double threshold) const;

  /// Per-prefix thresholds from calibrated_threshold(); reports the prefix
  /// with the smallest adjusted p-value.
  BinaryDetection detect_at_fpr(std::span<const TokenId> text, double fpr = kDefaultFpr) const;

  const BinaryCodec& codec() const noexcept { return codec_; }

 private:
  void check_text(std::span<const TokenId> text) const;

  Prf prf_;
  BinaryCodec codec_;
};

}  // namespace inkmark

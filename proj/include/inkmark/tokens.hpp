#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace inkmark {

using TokenId = std::uint32_t;

/// Ordered list of distinct token strings; ids are dense in [0, size).
class Vocabulary {
 public:
  Vocabulary() = default;
  /// Throws ValidationError on duplicates or an empty list.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view token) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// Probability vector p_t over the vocabulary at one generation step.
class TokenDistribution {
 public:
  static constexpr double kSumTolerance = 1e-9;

  /// Validates non-negativity and that entries sum to 1 within kSumTolerance.
  explicit TokenDistribution(std::vector<double> probabilities);

  static TokenDistribution uniform(std::size_t size);
  static TokenDistribution point_mass(std::size_t size, TokenId at);

  std::size_t size() const noexcept { return p_.size(); }
  double operator[](std::size_t i) const noexcept { return p_[i]; }
  std::span<const double> probabilities() const noexcept { return p_; }

  friend bool operator==(const TokenDistribution&, const TokenDistribution&) = default;

 private:
  std::vector<double> p_;
};

/// Prompt plus the tokens generated so far in one session.
struct GenerationContext {
  std::vector<TokenId> prompt;
  std::vector<TokenId> generated;

  std::size_t step() const noexcept { return generated.size(); }
  /// prompt followed by generated.
  std::vector<TokenId> history() const;
  /// The last `count` tokens of history() (fewer if the history is shorter).
  std::vector<TokenId> tail(std::size_t count) const;
};

enum class TokenizerMode { Word, Byte };

std::string_view to_string(TokenizerMode mode);
TokenizerMode tokenizer_mode_from_string(std::string_view name);

/// Literal used for out-of-vocabulary words in Word mode (always id 0).
inline constexpr std::string_view kUnknownToken = "<unk>";

/// Word mode: split on whitespace; every ASCII punctuation character is its
/// own token. The literal "<unk>" survives as one token.
/// Byte mode: one "<0xNN>" token per byte.
std::vector<std::string> tokenize(std::string_view text, TokenizerMode mode);

/// Inverse of tokenize up to whitespace: Word tokens are joined by single
/// spaces, Byte tokens are decoded to their bytes.
std::string detokenize(std::span<const std::string> tokens, TokenizerMode mode);

/// Byte-mode vocabulary: all 256 "<0xNN>" tokens in byte order.
Vocabulary byte_vocabulary();

/// Map strings to ids; unknown Word tokens map to the "<unk>" id when the
/// vocabulary has one, otherwise ValidationError.
std::vector<TokenId> encode_tokens(const Vocabulary& vocab, std::span<const std::string> tokens);

std::vector<std::string> decode_tokens(const Vocabulary& vocab, std::span<const TokenId> ids);

}  // namespace inkmark

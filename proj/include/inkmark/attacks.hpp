#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "inkmark/model.hpp"
#include "inkmark/rng.hpp"

namespace inkmark {

// The attacker never holds a key: watermarked generation is reached only
// through provider-side samplers handed in by the caller.

struct EmojiAttackResult {
  /// Content tokens interleaved with the separator, as generated.
  std::vector<TokenId> raw;
  /// raw with every separator removed.
  std::vector<TokenId> stripped;
};

/// Simulated instruction-following: max_len content tokens are drawn through
/// `watermarked` (whose context is the raw interleaved output), each followed
/// by a forced separator. The model itself conditions on the content-only
/// history, as an instruction-following model would.
EmojiAttackResult emoji_attack(const TokenModel& model, TokenId separator, std::span<const TokenId> prompt,
                               Sampler& watermarked, std::size_t max_len);

struct PrefixAttackResult {
  std::vector<TokenId> tokens;
  /// Model invocations spent; max_len, against 1 for plain generation.
  std::size_t prompts_issued = 0;
};

using SessionFactory = std::function<std::unique_ptr<Sampler>()>;

/// One fresh provider session per token, each prompted with the original
/// prompt followed by the output so far.
PrefixAttackResult prefix_specification_attack(const TokenModel& model, const SessionFactory& new_session,
                                               std::span<const TokenId> prompt, std::size_t max_len);

/// Replace round(fraction * length) distinct, uniformly chosen positions by
/// uniformly random vocabulary tokens.
std::vector<TokenId> substitution_attack(std::span<const TokenId> text, double fraction, std::size_t vocab_size,
                                         Rng& rng);

}  // namespace inkmark

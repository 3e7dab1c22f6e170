#include "inkmark/attacks.hpp"

#include <cmath>
#include <numeric>

#include "inkmark/error.hpp"

namespace inkmark {

EmojiAttackResult emoji_attack(const TokenModel& model, TokenId separator, std::span<const TokenId> prompt,
                               Sampler& watermarked, std::size_t max_len) {
  if (separator >= model.vocab_size()) throw ParameterError("separator token outside vocabulary");
  if (max_len < 1) throw ParameterError("max_len must be at least 1");
  GenerationContext raw;
  raw.prompt.assign(prompt.begin(), prompt.end());
  GenerationContext content;
  content.prompt = raw.prompt;

  EmojiAttackResult out;
  for (std::size_t i = 0; i < max_len; ++i) {
    const TokenDistribution p = model.next_distribution(content);
    const TokenId tok = watermarked.next(p, raw);
    raw.generated.push_back(tok);
    raw.generated.push_back(separator);
    if (tok != separator) content.generated.push_back(tok);
  }
  out.raw = std::move(raw.generated);
  out.stripped.reserve(out.raw.size() / 2);
  for (const TokenId t : out.raw) {
    if (t != separator) out.stripped.push_back(t);
  }
  return out;
}

PrefixAttackResult prefix_specification_attack(const TokenModel& model, const SessionFactory& new_session,
                                               std::span<const TokenId> prompt, std::size_t max_len) {
  if (max_len < 1) throw ParameterError("max_len must be at least 1");
  PrefixAttackResult out;
  out.tokens.reserve(max_len);
  for (std::size_t i = 0; i < max_len; ++i) {
    GenerationContext session;
    session.prompt.assign(prompt.begin(), prompt.end());
    session.prompt.insert(session.prompt.end(), out.tokens.begin(), out.tokens.end());
    const auto sampler = new_session();
    const TokenDistribution p = model.next_distribution(session);
    out.tokens.push_back(sampler->next(p, session));
    ++out.prompts_issued;
  }
  return out;
}

std::vector<TokenId> substitution_attack(std::span<const TokenId> text, double fraction, std::size_t vocab_size,
                                         Rng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ParameterError("fraction must lie in [0, 1]");
  if (vocab_size < 1) throw ParameterError("vocab_size must be positive");
  std::vector<TokenId> out(text.begin(), text.end());
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(out.size()) + 0.5));
  std::vector<std::size_t> positions(out.size());
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(positions.size() - i));
    std::swap(positions[i], positions[j]);
    out[positions[i]] = static_cast<TokenId>(rng.below(vocab_size));
  }
  return out;
}

}  // namespace inkmark

#include "inkmark/tokens.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>

#include "inkmark/error.hpp"

namespace inkmark {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty()) throw ValidationError("vocabulary must not be empty");
  ids_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw ValidationError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) {
    throw ValidationError("token id " + std::to_string(id) + " outside vocabulary of size " +
                          std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

TokenDistribution::TokenDistribution(std::vector<double> probabilities) : p_(std::move(probabilities)) {
  if (p_.empty()) throw ValidationError("token distribution must not be empty");
  double sum = 0.0;
  for (const double v : p_) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ValidationError("token distribution has a negative or non-finite entry");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw ValidationError("token distribution sums to " + std::to_string(sum) + ", not 1");
  }
}

TokenDistribution TokenDistribution::uniform(std::size_t size) {
  return TokenDistribution(std::vector<double>(size, 1.0 / static_cast<double>(size)));
}

TokenDistribution TokenDistribution::point_mass(std::size_t size, TokenId at) {
  std::vector<double> p(size, 0.0);
  p.at(at) = 1.0;
  return TokenDistribution(std::move(p));
}

std::vector<TokenId> GenerationContext::history() const {
  std::vector<TokenId> out;
  out.reserve(prompt.size() + generated.size());
  out.insert(out.end(), prompt.begin(), prompt.end());
  out.insert(out.end(), generated.begin(), generated.end());
  return out;
}

std::vector<TokenId> GenerationContext::tail(std::size_t count) const {
  const std::size_t total = prompt.size() + generated.size();
  const std::size_t take = std::min(count, total);
  std::vector<TokenId> out;
  out.reserve(take);
  for (std::size_t i = total - take; i < total; ++i) {
    out.push_back(i < prompt.size() ? prompt[i] : generated[i - prompt.size()]);
  }
  return out;
}

std::string_view to_string(TokenizerMode mode) {
  return mode == TokenizerMode::Word ? "word" : "byte";
}

TokenizerMode tokenizer_mode_from_string(std::string_view name) {
  if (name == "word") return TokenizerMode::Word;
  if (name == "byte") return TokenizerMode::Byte;
  throw ParameterError("unknown tokenizer '" + std::string(name) + "' (expected word or byte)");
}

namespace {

std::string byte_token(unsigned char b) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "<0x%02X>", b);
  return buf;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, TokenizerMode mode) {
  std::vector<std::string> out;
  if (mode == TokenizerMode::Byte) {
    out.reserve(text.size());
    for (const char c : text) out.push_back(byte_token(static_cast<unsigned char>(c)));
    return out;
  }
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush();
    } else if (text.substr(i, kUnknownToken.size()) == kUnknownToken) {
      flush();
      out.emplace_back(kUnknownToken);
      i += kUnknownToken.size() - 1;
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(static_cast<char>(c));
    }
  }
  flush();
  return out;
}

std::string detokenize(std::span<const std::string> tokens, TokenizerMode mode) {
  std::string out;
  if (mode == TokenizerMode::Byte) {
    for (const auto& t : tokens) {
      if (t.size() != 6 || t.compare(0, 3, "<0x") != 0 || t[5] != '>' || hex_value(t[3]) < 0 ||
          hex_value(t[4]) < 0) {
        throw ValidationError("'" + t + "' is not a byte token");
      }
      out.push_back(static_cast<char>(hex_value(t[3]) * 16 + hex_value(t[4])));
    }
    return out;
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

Vocabulary byte_vocabulary() {
  std::vector<std::string> tokens;
  tokens.reserve(256);
  for (int b = 0; b < 256; ++b) tokens.push_back(byte_token(static_cast<unsigned char>(b)));
  return Vocabulary(std::move(tokens));
}

std::vector<TokenId> encode_tokens(const Vocabulary& vocab, std::span<const std::string> tokens) {
  const auto unknown = vocab.find(kUnknownToken);
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (const auto id = vocab.find(t)) {
      ids.push_back(*id);
    } else if (unknown) {
      ids.push_back(*unknown);
    } else {
      throw ValidationError("token '" + t + "' not in vocabulary");
    }
  }
  return ids;
}

std::vector<std::string> decode_tokens(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (const TokenId id : ids) out.push_back(vocab.token(id));
  return out;
}

}  // namespace inkmark

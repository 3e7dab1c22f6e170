#include "inkmark/binary.hpp"

#include <algorithm>
#include <cmath>

#include "inkmark/error.hpp"
#include "inkmark/stats.hpp"

namespace inkmark {

BinaryCodec::BinaryCodec(std::size_t vocab_size) : vocab_size_(vocab_size), bits_(0) {
  if (vocab_size < 2) throw ParameterError("binary codec needs vocab_size >= 2");
  while ((std::size_t{1} << bits_) < vocab_size) ++bits_;
}

std::vector<std::uint8_t> BinaryCodec::encode(TokenId token) const {
  if (token >= vocab_size_) throw ValidationError("token id outside vocabulary");
  std::vector<std::uint8_t> out(bits_);
  for (std::size_t j = 0; j < bits_; ++j) out[j] = static_cast<std::uint8_t>(bit(token, j));
  return out;
}

TokenId BinaryCodec::decode(std::span<const std::uint8_t> bits) const {
  if (bits.size() != bits_) throw ValidationError("bit string has the wrong length");
  std::size_t id = 0;
  for (const auto b : bits) id = (id << 1) | (b & 1U);
  if (id >= vocab_size_) throw ValidationError("bit string decodes outside the vocabulary");
  return static_cast<TokenId>(id);
}

namespace {

double range_mass(std::span<const double> p, std::size_t lo, std::size_t hi) {
  hi = std::min(hi, p.size());
  double m = 0.0;
  for (std::size_t i = lo; i < hi; ++i) m += p[i];
  return m;
}

}  // namespace

double bit_probability(const TokenDistribution& p, const BinaryCodec& codec, std::span<const std::uint8_t> prefix) {
  if (p.size() != codec.vocab_size()) throw ValidationError("distribution size does not match codec");
  if (prefix.size() >= codec.bits_per_token()) throw ParameterError("bit prefix must be shorter than a token");
  std::size_t lo = 0;
  for (const auto b : prefix) lo = (lo << 1) | (b & 1U);
  const std::size_t rest = codec.bits_per_token() - prefix.size();
  lo <<= rest;
  const std::size_t half = std::size_t{1} << (rest - 1);
  const double all = range_mass(p.probabilities(), lo, lo + 2 * half);
  if (!(all > 0.0)) throw ValidationError("bit prefix has zero probability mass");
  const double one = range_mass(p.probabilities(), lo + half, lo + 2 * half);
  return std::clamp(one / all, 0.0, 1.0);
}

int sample_bit(double p1, double u) { return u < p1 ? 1 : 0; }

double score_bit(int bit, double u) {
  if (!(u > 0.0 && u < 1.0)) throw ValidationError("degenerate draw");
  return bit == 1 ? -std::log(u) : -std::log1p(-u);
}

double expected_watermarked_score(double p) {
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return 1.0 + h;
}

nlohmann::json BinaryWatermarkState::to_json() const {
  nlohmann::json j{{"lambda", lambda}, {"accumulated_information", accumulated_information}, {"activated", activated}};
  j["activation_index"] = activation_index ? nlohmann::json(*activation_index) : nlohmann::json(nullptr);
  return j;
}

BinaryInjector::BinaryInjector(const WatermarkKey& key, BinaryCodec codec, double lambda, Rng& true_randomness)
    : prf_(key), codec_(codec), rng_(&true_randomness) {
  if (!(lambda > 0.0)) throw ParameterError("lambda must be > 0");
  if (key.scheme() != Scheme::Binary) throw ParameterError("binary scheme requires a binary key");
  state_.lambda = lambda;
}

TokenId BinaryInjector::next(const TokenDistribution& p, const GenerationContext& context) {
  if (p.size() != codec_.vocab_size()) throw ValidationError("distribution size does not match codec");
  const auto probs = p.probabilities();
  const std::size_t bits = codec_.bits_per_token();
  const std::size_t token_index = context.generated.size();

  std::size_t lo = 0;
  for (std::size_t j = 0; j < bits; ++j) {
    const std::size_t half = std::size_t{1} << (bits - 1 - j);
    const double all = range_mass(probs, lo, lo + 2 * half);
    if (!(all > 0.0)) throw ValidationError("bit prefix has zero probability mass");
    const double p1 = std::clamp(range_mass(probs, lo + half, lo + 2 * half) / all, 0.0, 1.0);
    const double u = state_.activated
                         ? stream_->uniform(static_cast<TokenId>(token_index * bits + j))
                         : rng_->uniform();
    const int b = sample_bit(p1, u);
    if (!state_.activated) state_.accumulated_information -= std::log(b == 1 ? p1 : 1.0 - p1);
    if (b == 1) lo += half;
  }
  const auto token = static_cast<TokenId>(lo);

  if (!state_.activated && state_.accumulated_information >= state_.lambda) {
    state_.activated = true;
    state_.activation_index = token_index + 1;
    segment_.assign(context.generated.begin(), context.generated.end());
    segment_.push_back(token);
    stream_.emplace(prf_.with_prefix(segment_));
  }
  return token;
}

BinaryGeneration inject_binary(const TokenModel& model, std::span<const TokenId> prompt, const WatermarkKey& key,
                               const BinaryCodec& codec, double lambda, Rng& true_randomness, std::size_t max_len,
                               std::optional<TokenId> terminal) {
  BinaryInjector injector(key, codec, lambda, true_randomness);
  BinaryGeneration out;
  out.tokens = generate(model, prompt, injector, max_len, terminal);
  out.state = injector.state();
  return out;
}

nlohmann::json BinaryDetection::to_json() const {
  return nlohmann::json{{"verdict", verdict},
                        {"activation_prefix_index", best_prefix_index},
                        {"centered_score", centered_score},
                        {"bits_scored", bits_scored},
                        {"threshold", threshold},
                        {"p_value", p_value}};
}

double calibrated_threshold(std::size_t bits, std::size_t prefixes, double fpr) {
  if (!(fpr > 0.0 && fpr < 1.0)) throw ParameterError("fpr must lie in (0, 1)");
  if (bits == 0 || prefixes == 0) throw ParameterError("calibration needs at least one bit and one prefix");
  const double b = static_cast<double>(bits);
  return gamma_upper_quantile(b, fpr / static_cast<double>(prefixes)) - b;
}

BinaryDetector::BinaryDetector(const WatermarkKey& key, BinaryCodec codec) : prf_(key), codec_(codec) {
  if (key.scheme() != Scheme::Binary) throw ParameterError("binary scheme requires a binary key");
}

void BinaryDetector::check_text(std::span<const TokenId> text) const {
  if (text.size() < 2) throw ValidationError("binary detection needs at least 2 tokens");
  for (const TokenId t : text) {
    if (t >= codec_.vocab_size()) throw ValidationError("token id " + std::to_string(t) + " outside vocabulary");
  }
}

PrefixScore BinaryDetector::score_prefix(std::span<const TokenId> text, std::size_t prefix_index) const {
  if (prefix_index < 1 || prefix_index >= text.size()) throw ParameterError("prefix index must lie in [1, n)");
  const std::size_t bits = codec_.bits_per_token();
  const auto stream = prf_.with_prefix(text.first(prefix_index));
  PrefixScore s;
  s.prefix_index = prefix_index;
  for (std::size_t i = prefix_index; i < text.size(); ++i) {
    for (std::size_t j = 0; j < bits; ++j) {
      double u = stream.uniform(static_cast<TokenId>(i * bits + j));
      if (u == 0.0) u = 0x1.0p-64;  // an all-zero word
      s.raw_score += score_bit(codec_.bit(text[i], j), u);
    }
  }
  s.bits_scored = (text.size() - prefix_index) * bits;
  s.centered_score = s.raw_score - static_cast<double>(s.bits_scored);
  return s;
}

std::vector<PrefixScore> BinaryDetector::scan(std::span<const TokenId> text) const {
  check_text(text);
  std::vector<PrefixScore> out;
  out.reserve(text.size() - 1);
  for (std::size_t t = 1; t < text.size(); ++t) out.push_back(score_prefix(text, t));
  return out;
}

namespace {

double adjusted_p_value(const PrefixScore& s, std::size_t prefixes) {
  const double q = gamma_upper_tail(static_cast<double>(s.bits_scored), s.raw_score);
  return std::min(1.0, q * static_cast<double>(prefixes));
}

}  // namespace

BinaryDetection BinaryDetector::detect(std::span<const TokenId> text, double threshold) const {
  const auto scores = scan(text);
  const auto best = std::max_element(scores.begin(), scores.end(), [](const PrefixScore& a, const PrefixScore& b) {
    return a.centered_score < b.centered_score;
  });
  BinaryDetection d;
  d.best_prefix_index = best->prefix_index;
  d.bits_scored = best->bits_scored;
  d.centered_score = best->centered_score;
  d.threshold = threshold;
  d.verdict = best->centered_score >= threshold;
  d.p_value = adjusted_p_value(*best, scores.size());
  return d;
}

BinaryDetection BinaryDetector::detect_at_fpr(std::span<const TokenId> text, double fpr) const {
  if (!(fpr > 0.0 && fpr < 1.0)) throw ParameterError("fpr must lie in (0, 1)");
  const auto scores = scan(text);
  std::size_t best = 0;
  double best_p = 2.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const double p = adjusted_p_value(scores[k], scores.size());
    if (p < best_p || (p == best_p && scores[k].centered_score > scores[best].centered_score)) {
      best_p = p;
      best = k;
    }
  }
  BinaryDetection d;
  d.best_prefix_index = scores[best].prefix_index;
  d.bits_scored = scores[best].bits_scored;
  d.centered_score = scores[best].centered_score;
  d.threshold = calibrated_threshold(d.bits_scored, scores.size(), fpr);
  d.verdict = d.centered_score >= d.threshold;
  d.p_value = best_p;
  return d;
}

}  // namespace inkmark

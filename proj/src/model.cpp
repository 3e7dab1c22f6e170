#include "inkmark/model.hpp"

#include <cmath>
#include <fstream>

#include "inkmark/error.hpp"

namespace inkmark {

NgramModel NgramModel::train(std::span<const std::string> documents, int order, double smoothing,
                             TokenizerMode tokenizer) {
  if (order < 1) throw ParameterError("n-gram order must be at least 1");
  if (!(smoothing > 0.0) || !std::isfinite(smoothing)) throw ParameterError("smoothing must be > 0");

  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(documents.size());
  std::size_t total_tokens = 0;
  for (const auto& doc : documents) {
    tokenized.push_back(tokenize(doc, tokenizer));
    total_tokens += tokenized.back().size();
  }
  if (total_tokens == 0) throw ValidationError("corpus is empty after tokenization");

  Vocabulary vocab;
  if (tokenizer == TokenizerMode::Byte) {
    vocab = byte_vocabulary();
  } else {
    // <unk> first, then tokens in order of first appearance.
    std::vector<std::string> tokens{std::string(kUnknownToken)};
    std::unordered_map<std::string, bool> seen{{std::string(kUnknownToken), true}};
    for (const auto& doc : tokenized) {
      for (const auto& t : doc) {
        if (seen.emplace(t, true).second) tokens.push_back(t);
      }
    }
    vocab = Vocabulary(std::move(tokens));
  }

  NgramModel model(std::move(vocab), order, smoothing, tokenizer);
  const auto width = static_cast<std::size_t>(order - 1);
  for (const auto& doc : tokenized) {
    const std::vector<TokenId> ids = encode_tokens(model.vocabulary_, doc);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      // Every available context length up to order - 1 so short histories
      // at the start of a generation have counts of their own.
      for (std::size_t len = 0; len <= std::min(width, i); ++len) {
        std::vector<TokenId> ctx(ids.begin() + static_cast<std::ptrdiff_t>(i - len),
                                 ids.begin() + static_cast<std::ptrdiff_t>(i));
        auto& cell = model.counts_[std::move(ctx)];
        ++cell.total;
        ++cell.next[ids[i]];
      }
    }
  }
  return model;
}

TokenDistribution NgramModel::next_distribution(const GenerationContext& context) const {
  const std::size_t v = vocabulary_.size();
  const std::vector<TokenId> ctx = context.tail(static_cast<std::size_t>(order_ - 1));
  for (const TokenId t : ctx) {
    if (t >= v) throw ValidationError("context token " + std::to_string(t) + " outside vocabulary");
  }
  const auto it = counts_.find(ctx);
  if (it == counts_.end()) return TokenDistribution::uniform(v);

  const double denom = static_cast<double>(it->second.total) + smoothing_ * static_cast<double>(v);
  std::vector<double> p(v, smoothing_ / denom);
  for (const auto& [tok, count] : it->second.next) {
    p[tok] = (static_cast<double>(count) + smoothing_) / denom;
  }
  return TokenDistribution(std::move(p));
}

std::vector<TokenId> NgramModel::encode(std::string_view text) const {
  const auto tokens = tokenize(text, tokenizer_);
  return encode_tokens(vocabulary_, tokens);
}

std::string NgramModel::decode(std::span<const TokenId> ids) const {
  const auto tokens = decode_tokens(vocabulary_, ids);
  return detokenize(tokens, tokenizer_);
}

nlohmann::json NgramModel::to_json() const {
  nlohmann::json counts = nlohmann::json::array();
  for (const auto& [ctx, cell] : counts_) {
    nlohmann::json next = nlohmann::json::array();
    for (const auto& [tok, count] : cell.next) next.push_back({tok, count});
    counts.push_back({{"context", ctx}, {"next", std::move(next)}});
  }
  nlohmann::json j;
  j["format"] = "inkmark-ngram";
  j["version"] = kFormatVersion;
  j["order"] = order_;
  j["smoothing"] = smoothing_;
  j["tokenizer"] = std::string(to_string(tokenizer_));
  j["vocabulary"] = vocabulary_.tokens();
  j["counts"] = std::move(counts);
  return j;
}

NgramModel NgramModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "inkmark-ngram") {
      throw ValidationError("model file: unexpected format tag");
    }
    if (j.at("version").get<int>() != kFormatVersion) {
      throw ValidationError("model file: unsupported version " + j.at("version").dump());
    }
    const int order = j.at("order").get<int>();
    const double smoothing = j.at("smoothing").get<double>();
    if (order < 1 || !(smoothing > 0.0)) throw ValidationError("model file: invalid order or smoothing");
    NgramModel model(Vocabulary(j.at("vocabulary").get<std::vector<std::string>>()), order, smoothing,
                     tokenizer_mode_from_string(j.at("tokenizer").get<std::string>()));
    const std::size_t v = model.vocabulary_.size();
    for (const auto& entry : j.at("counts")) {
      auto ctx = entry.at("context").get<std::vector<TokenId>>();
      if (ctx.size() >= static_cast<std::size_t>(order)) {
        throw ValidationError("model file: context longer than order - 1");
      }
      ContextCounts cell;
      for (const auto& pair : entry.at("next")) {
        const auto tok = pair.at(0).get<TokenId>();
        const auto count = pair.at(1).get<std::uint64_t>();
        if (tok >= v) throw ValidationError("model file: token id outside vocabulary");
        for (const TokenId c : ctx) {
          if (c >= v) throw ValidationError("model file: context id outside vocabulary");
        }
        cell.next[tok] += count;
        cell.total += count;
      }
      model.counts_[std::move(ctx)] = std::move(cell);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  } catch (const ParameterError& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  }
}

void NgramModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write model file " + path.string());
  out << to_json().dump() << '\n';
  if (!out) throw IoError("cannot write model file " + path.string());
}

NgramModel NgramModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read model file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("model file " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

namespace {

TokenDistribution synthetic_distribution(double peak, std::size_t v, TokenId designated) {
  if (v < 2) throw ParameterError("synthetic model needs vocab_size >= 2");
  if (designated >= v) throw ParameterError("designated token outside vocabulary");
  const double lo = 1.0 / static_cast<double>(v);
  // A little slack so 1/v computed elsewhere is accepted.
  if (!(peak >= lo * (1.0 - 1e-12) && peak <= 1.0)) {
    throw ParameterError("peak mass must lie in [1/vocab_size, 1]");
  }
  std::vector<double> p(v, (1.0 - peak) / static_cast<double>(v - 1));
  p[designated] = peak;
  return TokenDistribution(std::move(p));
}

}  // namespace

std::string_view to_string(PeakPlacement placement) {
  return placement == PeakPlacement::Fixed ? "fixed" : "successor";
}

PeakPlacement peak_placement_from_string(std::string_view name) {
  if (name == "fixed") return PeakPlacement::Fixed;
  if (name == "successor") return PeakPlacement::Successor;
  throw ParameterError("unknown peak placement '" + std::string(name) + "' (expected fixed or successor)");
}

SyntheticModel::SyntheticModel(double peak_mass, std::size_t vocab_size, TokenId designated, PeakPlacement placement)
    : peak_mass_(peak_mass),
      vocab_size_(vocab_size),
      designated_(designated),
      placement_(placement),
      distribution_(synthetic_distribution(peak_mass, vocab_size, designated)) {}

TokenDistribution SyntheticModel::next_distribution(const GenerationContext& context) const {
  if (placement_ == PeakPlacement::Fixed || (context.prompt.empty() && context.generated.empty())) {
    return distribution_;
  }
  const TokenId last = context.generated.empty() ? context.prompt.back() : context.generated.back();
  const auto at = static_cast<TokenId>((static_cast<std::size_t>(last) + 1) % vocab_size_);
  if (at == designated_) return distribution_;
  std::vector<double> p(distribution_.probabilities().begin(), distribution_.probabilities().end());
  std::swap(p[at], p[designated_]);
  return TokenDistribution(std::move(p));
}

double SyntheticModel::shannon_entropy_bits() const {
  const double rest = (1.0 - peak_mass_) / static_cast<double>(vocab_size_ - 1);
  double h = 0.0;
  if (peak_mass_ > 0.0) h -= peak_mass_ * std::log2(peak_mass_);
  if (rest > 0.0) h -= (1.0 - peak_mass_) * std::log2(rest);
  return h;
}

double SyntheticModel::spike_entropy(double modulus) const {
  const double rest = (1.0 - peak_mass_) / static_cast<double>(vocab_size_ - 1);
  return peak_mass_ / (1.0 + modulus * peak_mass_) +
         static_cast<double>(vocab_size_ - 1) * rest / (1.0 + modulus * rest);
}

namespace {

/// Solve f(peak) = target for f decreasing on [1/v, 1].
template <class F>
double bisect_decreasing(F f, double target, std::size_t v) {
  double lo = 1.0 / static_cast<double>(v);
  double hi = 1.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double SyntheticModel::peak_mass_for_entropy(double bits, std::size_t vocab_size) {
  if (vocab_size < 2) throw ParameterError("synthetic model needs vocab_size >= 2");
  const double max_bits = std::log2(static_cast<double>(vocab_size));
  if (!(bits >= 0.0 && bits <= max_bits)) {
    throw ParameterError("target entropy must lie in [0, log2(vocab_size)] = [0, " + std::to_string(max_bits) +
                         "] bits");
  }
  return bisect_decreasing(
      [vocab_size](double peak) { return SyntheticModel(peak, vocab_size).shannon_entropy_bits(); }, bits,
      vocab_size);
}

double SyntheticModel::peak_mass_for_spike_entropy(double target, double modulus, std::size_t vocab_size) {
  if (vocab_size < 2) throw ParameterError("synthetic model needs vocab_size >= 2");
  if (!(modulus > 0.0)) throw ParameterError("spike modulus must be > 0");
  const double min_s = 1.0 / (1.0 + modulus);
  const double max_s = 1.0 / (1.0 + modulus / static_cast<double>(vocab_size));
  if (!(target >= min_s && target <= max_s)) {
    throw ParameterError("target spike entropy " + std::to_string(target) + " unreachable; reachable range is [" +
                         std::to_string(min_s) + ", " + std::to_string(max_s) + "]");
  }
  return bisect_decreasing(
      [&](double peak) { return SyntheticModel(peak, vocab_size).spike_entropy(modulus); }, target, vocab_size);
}

TokenId sample_from(std::span<const double> probabilities, double u) {
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (probabilities[i] <= 0.0) continue;
    cumulative += probabilities[i];
    last_positive = i;
    if (u < cumulative) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last_positive);
}

TokenId PlainSampler::next(const TokenDistribution& p, const GenerationContext&) {
  return sample_from(p.probabilities(), rng_->uniform());
}

std::vector<TokenId> generate(const TokenModel& model, std::span<const TokenId> prompt, Sampler& sampler,
                              std::size_t max_len, std::optional<TokenId> terminal,
                              const StepObserver& observer) {
  if (max_len < 1) throw ParameterError("max_len must be at least 1");
  GenerationContext ctx;
  ctx.prompt.assign(prompt.begin(), prompt.end());
  ctx.generated.reserve(max_len);
  while (ctx.generated.size() < max_len) {
    const TokenDistribution p = model.next_distribution(ctx);
    const TokenId tok = sampler.next(p, ctx);
    if (observer) observer(p, tok);
    ctx.generated.push_back(tok);
    if (terminal && tok == *terminal) break;
  }
  return std::move(ctx.generated);
}

}  // namespace inkmark

#include "inkmark/redgreen.hpp"

#include <cmath>

#include "inkmark/entropy.hpp"
#include "inkmark/error.hpp"

namespace inkmark {

std::string_view to_string(RedGreenMode mode) { return mode == RedGreenMode::Hard ? "hard" : "soft"; }

void RedGreenParams::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ParameterError("gamma must lie in the open interval (0, 1)");
  if (mode == RedGreenMode::Soft && !(delta >= 0.0 && std::isfinite(delta))) {
    throw ParameterError("delta must be a finite value >= 0");
  }
  if (context_width < 1) throw ParameterError("context width h must be at least 1");
}

nlohmann::json RedGreenParams::to_json() const {
  nlohmann::json j{{"gamma", gamma}, {"h", context_width}, {"mode", std::string(to_string(mode))}};
  if (mode == RedGreenMode::Soft) j["delta"] = delta;
  return j;
}

RedGreenParams RedGreenParams::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParameterError("red/green parameters must be a JSON object");
  RedGreenParams p;
  try {
    p.gamma = j.value("gamma", p.gamma);
    p.delta = j.value("delta", p.delta);
    p.context_width = j.value("h", p.context_width);
    if (j.contains("mode")) p.mode = redgreen_mode_from_string(j.at("mode").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("malformed red/green parameters: ") + e.what());
  }
  p.validate();
  return p;
}

RedGreenMode redgreen_mode_from_string(std::string_view name) {
  if (name == "hard") return RedGreenMode::Hard;
  if (name == "soft") return RedGreenMode::Soft;
  throw ParameterError("unknown red/green mode '" + std::string(name) + "' (expected hard or soft)");
}

nlohmann::json RedGreenDetection::to_json() const {
  nlohmann::json j{{"verdict", verdict},         {"z_score", z_score}, {"p_value", p_value},
                   {"green_count", green_count}, {"total", total},     {"threshold_sigmas", threshold_sigmas}};
  if (window_start) j["window_start"] = *window_start;
  return j;
}

double green_z_score(std::size_t green, std::size_t total, double gamma) {
  const double t = static_cast<double>(total);
  return (static_cast<double>(green) - gamma * t) / std::sqrt(t * gamma * (1.0 - gamma));
}

GreenListCache::GreenListCache(const WatermarkKey& key, double gamma, std::size_t vocab_size)
    : prf_(key), gamma_(gamma), vocab_size_(vocab_size) {
  green_list_size(gamma, vocab_size);  // validates
}

const GreenList& GreenListCache::get(std::span<const TokenId> context) {
  std::vector<TokenId> k(context.begin(), context.end());
  if (const auto it = cache_.find(k); it != cache_.end()) return it->second;
  if (cache_.size() >= kMaxEntries) cache_.clear();
  GreenList list = prf_partition(prf_, context, gamma_, vocab_size_);
  return cache_.emplace(std::move(k), std::move(list)).first->second;
}

namespace {

void require_key_scheme(const WatermarkKey& key, Scheme expected) {
  if (key.scheme() != expected) {
    throw ParameterError("key for scheme '" + std::string(to_string(key.scheme())) + "' used with scheme '" +
                         std::string(to_string(expected)) + "'");
  }
}

}  // namespace

RedGreenWatermarker::RedGreenWatermarker(const WatermarkKey& key, RedGreenParams params, std::size_t vocab_size)
    : params_(params), lists_(key, params.gamma, vocab_size) {
  params_.validate();
  require_key_scheme(key, Scheme::RedGreen);
}

TokenDistribution RedGreenWatermarker::reweight(const TokenDistribution& p, std::span<const TokenId> context) {
  if (p.size() != lists_.vocab_size()) throw ValidationError("distribution size does not match vocabulary");
  if (context.size() < params_.context_width) throw ValidationError("context shorter than h");
  const auto& green = lists_.get(context.last(params_.context_width));
  std::vector<double> q(p.probabilities().begin(), p.probabilities().end());
  if (params_.mode == RedGreenMode::Hard) {
    double mass = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (!green.contains(static_cast<TokenId>(i))) q[i] = 0.0;
      mass += q[i];
    }
    if (!(mass > 0.0)) throw Error("no green support");
    for (double& v : q) v /= mass;
    return TokenDistribution(std::move(q));
  }
  if (params_.delta == 0.0) return p;
  const double boost = std::exp(params_.delta);
  double mass = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (green.contains(static_cast<TokenId>(i))) q[i] *= boost;
    mass += q[i];
  }
  for (double& v : q) v /= mass;
  return TokenDistribution(std::move(q));
}

TokenId RedGreenWatermarker::inject_step(const TokenDistribution& p, std::span<const TokenId> context, double u) {
  const TokenDistribution q = reweight(p, context);
  return sample_from(q.probabilities(), u);
}

TokenId RedGreenSampler::next(const TokenDistribution& p, const GenerationContext& context) {
  const double u = rng_->uniform();
  const std::size_t h = wm_->params().context_width;
  if (context.prompt.size() + context.generated.size() < h) return sample_from(p.probabilities(), u);
  const auto tail = context.tail(h);
  return wm_->inject_step(p, tail, u);
}

RedGreenDetector::RedGreenDetector(const WatermarkKey& key, double gamma, std::size_t context_width,
                                   std::size_t vocab_size)
    : width_(context_width), lists_(key, gamma, vocab_size) {
  if (context_width < 1) throw ParameterError("context width h must be at least 1");
  require_key_scheme(key, Scheme::RedGreen);
}

std::vector<std::uint8_t> RedGreenDetector::green_mask(std::span<const TokenId> text) {
  if (text.size() <= width_) throw ValidationError("insufficient tokens");
  std::vector<std::uint8_t> mask;
  mask.reserve(text.size() - width_);
  for (std::size_t i = width_; i < text.size(); ++i) {
    if (text[i] >= lists_.vocab_size()) {
      throw ValidationError("token id " + std::to_string(text[i]) + " outside vocabulary");
    }
    mask.push_back(lists_.get(text.subspan(i - width_, width_)).contains(text[i]) ? 1 : 0);
  }
  return mask;
}

GreenCount RedGreenDetector::count_green(std::span<const TokenId> text) {
  const auto mask = green_mask(text);
  GreenCount c;
  c.total = mask.size();
  for (const auto m : mask) c.green += m;
  return c;
}

namespace {

RedGreenDetection make_detection(std::size_t green, std::size_t total, double gamma, double threshold_sigmas,
                                 PValueMethod method) {
  RedGreenDetection d;
  d.green_count = green;
  d.total = total;
  d.threshold_sigmas = threshold_sigmas;
  d.z_score = green_z_score(green, total, gamma);
  if (method == PValueMethod::ExactBinomial) {
    if (total > 10000) throw ParameterError("exact binomial p-value is limited to 10^4 scored tokens");
    d.p_value = binomial_upper_tail(green, total, gamma);
  } else {
    d.p_value = normal_upper_tail(d.z_score);
  }
  d.verdict = d.z_score >= threshold_sigmas;
  return d;
}

}  // namespace

RedGreenDetection RedGreenDetector::detect(std::span<const TokenId> text, double threshold_sigmas,
                                           PValueMethod method) {
  const GreenCount c = count_green(text);
  return make_detection(c.green, c.total, gamma(), threshold_sigmas, method);
}

RedGreenDetection RedGreenDetector::detect_windowed(std::span<const TokenId> text, std::size_t window,
                                                    double threshold_sigmas) {
  if (window < 1) throw ParameterError("window must be at least 1 token");
  const auto mask = green_mask(text);
  if (mask.size() <= window) {
    std::size_t green = 0;
    for (const auto m : mask) green += m;
    auto d = make_detection(green, mask.size(), gamma(), threshold_sigmas, PValueMethod::Normal);
    d.window_start = width_;
    return d;
  }
  std::size_t green = 0;
  for (std::size_t i = 0; i < window; ++i) green += mask[i];
  std::size_t best_green = green;
  std::size_t best_start = 0;
  for (std::size_t start = 1; start + window <= mask.size(); ++start) {
    green += mask[start + window - 1];
    green -= mask[start - 1];
    if (green > best_green) {
      best_green = green;
      best_start = start;
    }
  }
  auto d = make_detection(best_green, window, gamma(), threshold_sigmas, PValueMethod::Normal);
  d.window_start = best_start + width_;
  return d;
}

GreenCount count_green(std::span<const TokenId> text, const WatermarkKey& key, double gamma,
                       std::size_t context_width, std::size_t vocab_size) {
  RedGreenDetector detector(key, gamma, context_width, vocab_size);
  return detector.count_green(text);
}

RedGreenDetection detect_redgreen(std::span<const TokenId> text, const WatermarkKey& key,
                                  const RedGreenParams& params, std::size_t vocab_size, double threshold_sigmas) {
  RedGreenDetector detector(key, params.gamma, params.context_width, vocab_size);
  return detector.detect(text, threshold_sigmas);
}

nlohmann::json ErrorRateEstimate::to_json() const {
  return nlohmann::json{{"fpr", fpr},
                        {"fnr", fnr},
                        {"fpr_ci", {fpr_ci.lower, fpr_ci.upper}},
                        {"fnr_ci", {fnr_ci.lower, fnr_ci.upper}},
                        {"avg_spike_entropy", avg_spike_entropy},
                        {"spike_modulus", spike_modulus},
                        {"mean_z_watermarked", mean_z_watermarked},
                        {"mean_z_plain", mean_z_plain},
                        {"n_trials", n_trials},
                        {"text_len", text_len}};
}

namespace {

struct TrialRunner {
  const TokenModel& model;
  const RedGreenParams& params;
  std::size_t text_len;
  double threshold_sigmas;
  double spike_modulus;
  std::uint64_t seed;

  std::size_t false_pos = 0;
  std::size_t false_neg = 0;
  double spike_sum = 0.0;
  std::size_t spike_steps = 0;
  ErrorRateEstimate out{};

  void run(std::size_t trial, RedGreenWatermarker& wm, RedGreenDetector& detector) {
    const std::size_t v = model.vocab_size();
    const std::size_t h = params.context_width;
    const StepObserver observe = [&](const TokenDistribution& p, TokenId) {
      spike_sum += spike_entropy(p, spike_modulus);
      ++spike_steps;
    };
    Rng rng(derive_seed(seed, trial));
    std::vector<TokenId> prompt(h);
    for (auto& t : prompt) t = static_cast<TokenId>(rng.below(v));

    RedGreenSampler wm_sampler(wm, rng);
    auto text = prompt;
    const auto marked = generate(model, prompt, wm_sampler, text_len, std::nullopt, observe);
    text.insert(text.end(), marked.begin(), marked.end());
    const auto d_wm = detector.detect(text, threshold_sigmas);
    out.z_watermarked.push_back(d_wm.z_score);
    if (!d_wm.verdict) ++false_neg;

    PlainSampler plain(rng);
    text = prompt;
    const auto unmarked = generate(model, prompt, plain, text_len);
    text.insert(text.end(), unmarked.begin(), unmarked.end());
    const auto d_plain = detector.detect(text, threshold_sigmas);
    out.z_plain.push_back(d_plain.z_score);
    if (d_plain.verdict) ++false_pos;
  }

  ErrorRateEstimate finish(std::size_t n_trials) {
    const double n = static_cast<double>(n_trials);
    out.fpr = static_cast<double>(false_pos) / n;
    out.fnr = static_cast<double>(false_neg) / n;
    out.fpr_ci = wilson_interval(false_pos, n_trials);
    out.fnr_ci = wilson_interval(false_neg, n_trials);
    out.avg_spike_entropy = spike_sum / static_cast<double>(spike_steps);
    out.spike_modulus = spike_modulus;
    out.mean_z_watermarked = mean(out.z_watermarked);
    out.mean_z_plain = mean(out.z_plain);
    out.n_trials = n_trials;
    out.text_len = text_len;
    return std::move(out);
  }
};

void check_trial_args(const RedGreenParams& params, std::size_t n_trials, std::size_t text_len) {
  if (n_trials < 100) throw ParameterError("n_trials must be at least 100");
  if (text_len < 1) throw ParameterError("text_len must be at least 1");
  params.validate();
}

}  // namespace

ErrorRateEstimate estimate_error_rates(const TokenModel& model, const WatermarkKey& key,
                                       const RedGreenParams& params, std::size_t n_trials, std::size_t text_len,
                                       double threshold_sigmas, double spike_modulus, std::uint64_t seed) {
  check_trial_args(params, n_trials, text_len);
  const std::size_t v = model.vocab_size();
  RedGreenWatermarker wm(key, params, v);
  RedGreenDetector detector(key, params.gamma, params.context_width, v);
  TrialRunner runner{model, params, text_len, threshold_sigmas, spike_modulus, seed};
  for (std::size_t trial = 0; trial < n_trials; ++trial) runner.run(trial, wm, detector);
  return runner.finish(n_trials);
}

ErrorRateEstimate estimate_error_rates(const TokenModel& model, const TrialKeys& keys,
                                       const RedGreenParams& params, std::size_t n_trials, std::size_t text_len,
                                       double threshold_sigmas, double spike_modulus, std::uint64_t seed) {
  check_trial_args(params, n_trials, text_len);
  const std::size_t v = model.vocab_size();
  TrialRunner runner{model, params, text_len, threshold_sigmas, spike_modulus, seed};
  for (std::size_t trial = 0; trial < n_trials; ++trial) {
    const WatermarkKey key = keys(trial);
    RedGreenWatermarker wm(key, params, v);
    RedGreenDetector detector(key, params.gamma, params.context_width, v);
    runner.run(trial, wm, detector);
  }
  return runner.finish(n_trials);
}

}  // namespace inkmark

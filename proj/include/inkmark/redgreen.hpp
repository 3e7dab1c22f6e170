#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "inkmark/model.hpp"
#include "inkmark/prf.hpp"
#include "inkmark/stats.hpp"
#include "json.hpp"

namespace inkmark {

enum class RedGreenMode { Hard, Soft };

std::string_view to_string(RedGreenMode mode);

struct RedGreenParams {
  double gamma = 0.5;
  /// Logit boost of green tokens; ignored in Hard mode.
  double delta = 2.0;
  std::size_t context_width = 1;
  RedGreenMode mode = RedGreenMode::Soft;

  /// Throws ParameterError.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing fields keep their defaults. Throws ParameterError.
  static RedGreenParams from_json(const nlohmann::json& j);
};

RedGreenMode redgreen_mode_from_string(std::string_view name);

enum class PValueMethod { Normal, ExactBinomial };

struct GreenCount {
  std::size_t green = 0;
  std::size_t total = 0;
};

struct RedGreenDetection {
  std::size_t green_count = 0;
  std::size_t total = 0;
  double z_score = 0.0;
  double p_value = 1.0;
  bool verdict = false;
  double threshold_sigmas = 4.0;
  /// Start of the scored window when the sliding-window scan was used.
  std::optional<std::size_t> window_start;

  nlohmann::json to_json() const;
};

/// (green - gamma * total) / sqrt(total * gamma * (1 - gamma)).
double green_z_score(std::size_t green, std::size_t total, double gamma);

/// Green lists for one key, memoised per context. Not thread-safe; use one
/// instance per thread.
class GreenListCache {
 public:
  static constexpr std::size_t kMaxEntries = 1 << 16;

  GreenListCache(const WatermarkKey& key, double gamma, std::size_t vocab_size);

  const GreenList& get(std::span<const TokenId> context);

  double gamma() const noexcept { return gamma_; }
  std::size_t vocab_size() const noexcept { return vocab_size_; }

 private:
  Prf prf_;
  double gamma_;
  std::size_t vocab_size_;
  std::map<std::vector<TokenId>, GreenList> cache_;
};

/// Provider-side injection: modifies each step distribution according to the
/// green list seeded by the previous context_width tokens.
class RedGreenWatermarker {
 public:
  RedGreenWatermarker(const WatermarkKey& key, RedGreenParams params, std::size_t vocab_size);

  /// Hard: p restricted to green and renormalised. Soft: green entries
  /// scaled by e^delta, then renormalised. Throws Error("no green support")
  /// in Hard mode when no green token has positive mass.
  TokenDistribution reweight(const TokenDistribution& p, std::span<const TokenId> context);

  /// Draw from reweight(p, context) by inverse CDF at u. `context` must
  /// hold at least context_width tokens; only the last context_width are used.
  TokenId inject_step(const TokenDistribution& p, std::span<const TokenId> context, double u);

  const RedGreenParams& params() const noexcept { return params_; }

 private:
  RedGreenParams params_;
  GreenListCache lists_;
};

/// Sampler adapter. Steps whose history is shorter than context_width are
/// sampled plainly (they are never scored by detection).
class RedGreenSampler final : public Sampler {
 public:
  RedGreenSampler(RedGreenWatermarker& watermarker, Rng& rng) : wm_(&watermarker), rng_(&rng) {}
  TokenId next(const TokenDistribution& p, const GenerationContext& context) override;

 private:
  RedGreenWatermarker* wm_;
  Rng* rng_;
};

/// Keyed detector: scores each token from index context_width on against
/// the green list seeded by its preceding context_width tokens.
class RedGreenDetector {
 public:
  RedGreenDetector(const WatermarkKey& key, double gamma, std::size_t context_width, std::size_t vocab_size);

  /// Throws ValidationError("insufficient tokens") when text.size() <= h.
  GreenCount count_green(std::span<const TokenId> text);

  RedGreenDetection detect(std::span<const TokenId> text, double threshold_sigmas,
                           PValueMethod method = PValueMethod::Normal);

  /// Maximum-z window of `window` scored tokens (window >= 1). Texts with
  /// fewer scored tokens than `window` are scored whole.
  RedGreenDetection detect_windowed(std::span<const TokenId> text, std::size_t window, double threshold_sigmas);

  /// Per scored token: 1 if green.
  std::vector<std::uint8_t> green_mask(std::span<const TokenId> text);

  double gamma() const noexcept { return lists_.gamma(); }
  std::size_t context_width() const noexcept { return width_; }

 private:
  std::size_t width_;
  GreenListCache lists_;
};

GreenCount count_green(std::span<const TokenId> text, const WatermarkKey& key, double gamma,
                       std::size_t context_width, std::size_t vocab_size);

RedGreenDetection detect_redgreen(std::span<const TokenId> text, const WatermarkKey& key,
                                  const RedGreenParams& params, std::size_t vocab_size, double threshold_sigmas);

struct ErrorRateEstimate {
  double fpr = 0.0;
  double fnr = 0.0;
  Interval fpr_ci;
  Interval fnr_ci;
  double avg_spike_entropy = 0.0;
  double spike_modulus = 0.0;
  double mean_z_watermarked = 0.0;
  double mean_z_plain = 0.0;
  std::size_t n_trials = 0;
  std::size_t text_len = 0;
  /// Per-trial z-scores; not serialised.
  std::vector<double> z_watermarked;
  std::vector<double> z_plain;

  nlohmann::json to_json() const;
};

/// Key used for trial i.
using TrialKeys = std::function<WatermarkKey(std::size_t trial)>;

/// Monte Carlo over n_trials watermarked and n_trials plain generations of
/// text_len scored tokens. Each text is preceded by context_width random
/// prompt tokens, which are included in the detected text so exactly
/// text_len tokens are scored. Wilson 95% intervals. n_trials >= 100.
ErrorRateEstimate estimate_error_rates(const TokenModel& model, const WatermarkKey& key,
                                       const RedGreenParams& params, std::size_t n_trials, std::size_t text_len,
                                       double threshold_sigmas, double spike_modulus, std::uint64_t seed);

/// As above with a fresh key per trial, averaging over the key distribution.
ErrorRateEstimate estimate_error_rates(const TokenModel& model, const TrialKeys& keys,
                                       const RedGreenParams& params, std::size_t n_trials, std::size_t text_len,
                                       double threshold_sigmas, double spike_modulus, std::uint64_t seed);

}  // namespace inkmark

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "inkmark/model.hpp"
#include "inkmark/prf.hpp"
#include "inkmark/redgreen.hpp"
#include "inkmark/stats.hpp"
#include "json.hpp"

namespace inkmark {

/// Peak-mass source; either peak_mass or the pool's target_entropy fixes it.
struct SyntheticPoolModel {
  std::optional<double> peak_mass;
  std::size_t vocab_size = 1000;
  PeakPlacement placement = PeakPlacement::Successor;
};

/// A trained n-gram model file.
struct CorpusPoolModel {
  std::filesystem::path path;
};

struct PoolSpec {
  std::string name;
  std::variant<SyntheticPoolModel, CorpusPoolModel> model;
  std::size_t text_len = 200;
  std::size_t n_texts = 1000;
  /// Shannon entropy (bits/token) the synthetic source is solved for.
  std::optional<double> target_entropy;

  void validate() const;
  nlohmann::json to_json() const;
  static PoolSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

enum class KeyPolicy {
  /// A fresh key per text pair: rates average over the key distribution.
  PerText,
  /// One key for the whole experiment.
  Shared,
};

struct ExperimentConfig {
  Scheme scheme = Scheme::RedGreen;
  RedGreenParams redgreen;
  double lambda = 64.0;
  double fpr_target = 1e-3;
  /// Modulus of the reported spike entropy; required in config files.
  double spike_modulus = 1.0;
  std::size_t bootstrap_resamples = 1000;
  KeyPolicy key_policy = KeyPolicy::PerText;
  std::vector<PoolSpec> pools;
  /// Recorded verbatim in the report metadata; the current time if unset.
  std::optional<std::string> timestamp;

  void validate() const;
  nlohmann::json to_json() const;
  /// Relative corpus paths resolve against base_dir.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
};

/// Generated texts of one pool, paired: watermarked[i] and plain[i] share a
/// key and a prompt.
struct Pool {
  PoolSpec spec;
  std::size_t vocab_size = 0;
  std::optional<double> peak_mass;
  std::vector<std::vector<TokenId>> watermarked;
  std::vector<std::vector<TokenId>> plain;
  std::vector<std::uint64_t> key_seeds;
  /// Means over the model distributions met during plain generation.
  double avg_entropy_bits = 0.0;
  double avg_spike_entropy = 0.0;
};

/// Requires at least two specs. Throws ValidationError for a missing corpus.
std::vector<Pool> build_pools(const ExperimentConfig& config, std::uint64_t seed);

/// The key used for text `index` of a pool.
WatermarkKey pool_text_key(const ExperimentConfig& config, const Pool& pool, std::size_t index);

/// Per-text detection statistic: red/green z-score, or for the binary scheme
/// the largest standardised centered score over prefixes.
double detection_statistic(const ExperimentConfig& config, const Pool& pool, std::size_t index, bool watermarked);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
};

struct PoolResult {
  std::string name;
  double avg_entropy_bits = 0.0;
  double avg_spike_entropy = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
  Interval fpr_ci;
  Interval fnr_ci;
  std::size_t n_texts = 0;
  std::size_t text_len = 0;
  std::vector<RocPoint> roc;
};

struct ExperimentReport {
  nlohmann::json metadata;
  double threshold = 0.0;
  std::vector<PoolResult> pools;
  std::string low_pool;
  std::string high_pool;
  /// fnr(low_pool) - fnr(high_pool); pools ranked by measured entropy.
  double disparity = 0.0;
  Interval disparity_ci;

  nlohmann::json to_json() const;
  static ExperimentReport from_json(const nlohmann::json& j);
};

/// Smallest count of pooled plain texts that can calibrate fpr_target.
std::size_t minimum_calibration_texts(double fpr_target);

/// Largest-k rule: with N pooled plain scores and k = floor(fpr * N), the
/// threshold sits just above the (k+1)-th largest score so at most k plain
/// texts are flagged.
double calibrate_threshold(std::vector<double> plain_scores, double fpr_target);

ExperimentReport run_fnr_experiment(const std::vector<Pool>& pools, const ExperimentConfig& config,
                                    std::uint64_t seed);

/// build_pools followed by run_fnr_experiment.
ExperimentReport run_experiment(const ExperimentConfig& config, std::uint64_t seed);

struct OperatingPointReport {
  std::uint64_t seed = 0;
  std::size_t vocab_size = 0;
  double gamma = 0.5;
  double delta = 2.0;
  double spike_modulus = 0.0;
  double peak_mass = 0.0;
  double target_spike_entropy = 0.8;
  double avg_spike_entropy = 0.0;
  std::size_t text_len = 200;
  std::size_t n_trials = 0;
  double threshold_sigmas = 4.0;
  double fnr = 0.0;
  Interval fnr_ci;
  double fpr = 0.0;
  Interval fpr_ci;
  /// One-sided normal tail at threshold_sigmas.
  double fpr_nominal = 0.0;
  /// Empirical FPR of the plain texts at threshold 0.
  double fpr_at_zero_sigma = 0.0;
  double fnr_bound = 0.014;

  bool within_bound() const noexcept { return fnr <= fnr_bound; }
  nlohmann::json to_json() const;
};

/// Spike modulus z = (1 - gamma)(e^delta - 1) / (1 + (e^delta - 1) gamma),
/// the modulus under which the soft rule's green-token gain is governed by
/// spike entropy.
double soft_rule_modulus(double gamma, double delta);

/// Calibrates a synthetic source (successor peak placement) to average spike
/// entropy 0.8 under soft_rule_modulus(0.5, 2), then measures FNR of n_trials texts of 200
/// scored tokens at the 4-sigma threshold with a fresh key per trial.
OperatingPointReport reproduce_operating_point(std::uint64_t seed, std::size_t n_trials = 10000,
                                               std::size_t vocab_size = 1000);

}  // namespace inkmark

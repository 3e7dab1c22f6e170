#include "inkmark/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>

#include "inkmark/binary.hpp"
#include "inkmark/clock.hpp"
#include "inkmark/entropy.hpp"
#include "inkmark/error.hpp"
#include "inkmark/version.hpp"

namespace inkmark {

using nlohmann::json;

namespace {

constexpr const char* kExperimentProvider = "experiment";

template <typename T>
T field(const json& j, const char* name, const std::string& where) {
  if (!j.contains(name)) throw ParameterError(where + ": missing field '" + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw ParameterError(where + ": field '" + name + "' has the wrong type");
  }
}

std::size_t count_field(const json& j, const char* name, const std::string& where) {
  const auto& v = j.at(name);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ParameterError(where + ": field '" + name + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::string_view to_string(KeyPolicy policy) { return policy == KeyPolicy::PerText ? "per_text" : "shared"; }

KeyPolicy key_policy_from_string(std::string_view name) {
  if (name == "per_text") return KeyPolicy::PerText;
  if (name == "shared") return KeyPolicy::Shared;
  throw ParameterError("unknown key_policy '" + std::string(name) + "' (expected per_text or shared)");
}

json interval_json(const Interval& i) { return json::array({i.lower, i.upper}); }

Interval interval_from(const json& j) { return Interval{j.at(0).get<double>(), j.at(1).get<double>()}; }

std::unique_ptr<TokenModel> make_model(const PoolSpec& spec, std::optional<double>& peak_out) {
  if (const auto* s = std::get_if<SyntheticPoolModel>(&spec.model)) {
    const double peak = s->peak_mass ? *s->peak_mass : SyntheticModel::peak_mass_for_entropy(*spec.target_entropy, s->vocab_size);
    peak_out = peak;
    return std::make_unique<SyntheticModel>(peak, s->vocab_size, 0, s->placement);
  }
  const auto& c = std::get<CorpusPoolModel>(spec.model);
  std::error_code ec;
  if (!std::filesystem::is_regular_file(c.path, ec)) {
    throw ValidationError("pool '" + spec.name + "' references missing corpus model " + c.path.string());
  }
  return std::make_unique<NgramModel>(NgramModel::load(c.path));
}

double binary_statistic(const BinaryDetector& detector, std::span<const TokenId> text) {
  double best = -INFINITY;
  for (const auto& s : detector.scan(text)) {
    best = std::max(best, s.centered_score / std::sqrt(static_cast<double>(s.bits_scored)));
  }
  return best;
}

}  // namespace

void PoolSpec::validate() const {
  if (name.empty()) throw ParameterError("pool name must not be empty");
  if (n_texts < 1) throw ParameterError("pool '" + name + "': n_texts must be at least 1");
  if (text_len < 1) throw ParameterError("pool '" + name + "': text_len must be at least 1");
  if (const auto* s = std::get_if<SyntheticPoolModel>(&model)) {
    if (s->vocab_size < 2) throw ParameterError("pool '" + name + "': vocab_size must be at least 2");
    if (s->peak_mass.has_value() == target_entropy.has_value()) {
      throw ParameterError("pool '" + name + "': give exactly one of peak_mass and target_entropy");
    }
    if (s->peak_mass) SyntheticModel(*s->peak_mass, s->vocab_size);
    if (target_entropy && !(*target_entropy >= 0.0 && *target_entropy <= std::log2(static_cast<double>(s->vocab_size)))) {
      throw ParameterError("pool '" + name + "': target_entropy must lie in [0, log2(vocab_size)]");
    }
  } else if (target_entropy) {
    throw ParameterError("pool '" + name + "': target_entropy applies to synthetic pools only");
  }
}

json PoolSpec::to_json() const {
  json m;
  if (const auto* s = std::get_if<SyntheticPoolModel>(&model)) {
    m = json{{"kind", "synthetic"}, {"vocab_size", s->vocab_size}, {"placement", std::string(to_string(s->placement))}};
    m["peak_mass"] = s->peak_mass ? json(*s->peak_mass) : json(nullptr);
  } else {
    m = json{{"kind", "ngram"}, {"path", std::get<CorpusPoolModel>(model).path.generic_string()}};
  }
  json j{{"name", name}, {"model", m}, {"text_len", text_len}, {"n_texts", n_texts}};
  j["target_entropy"] = target_entropy ? json(*target_entropy) : json(nullptr);
  return j;
}

PoolSpec PoolSpec::from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ParameterError("pool spec must be a JSON object");
  PoolSpec p;
  p.name = field<std::string>(j, "name", "pool spec");
  const std::string where = "pool '" + p.name + "'";
  if (j.contains("text_len")) p.text_len = count_field(j, "text_len", where);
  if (j.contains("n_texts")) p.n_texts = count_field(j, "n_texts", where);
  if (j.contains("target_entropy") && !j.at("target_entropy").is_null()) {
    p.target_entropy = field<double>(j, "target_entropy", where);
  }
  const json m = field<json>(j, "model", where);
  const auto kind = field<std::string>(m, "kind", where + " model");
  if (kind == "synthetic") {
    SyntheticPoolModel s;
    if (m.contains("vocab_size")) s.vocab_size = count_field(m, "vocab_size", where);
    if (m.contains("peak_mass") && !m.at("peak_mass").is_null()) s.peak_mass = field<double>(m, "peak_mass", where);
    if (m.contains("placement")) s.placement = peak_placement_from_string(field<std::string>(m, "placement", where));
    p.model = s;
  } else if (kind == "ngram") {
    std::filesystem::path path = field<std::string>(m, "path", where + " model");
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    p.model = CorpusPoolModel{path};
  } else {
    throw ParameterError(where + ": unknown model kind '" + kind + "' (expected synthetic or ngram)");
  }
  p.validate();
  return p;
}

void ExperimentConfig::validate() const {
  if (pools.size() < 2) throw ParameterError("an experiment needs at least two pools");
  for (const auto& p : pools) p.validate();
  for (std::size_t i = 0; i < pools.size(); ++i) {
    for (std::size_t k = i + 1; k < pools.size(); ++k) {
      if (pools[i].name == pools[k].name) throw ParameterError("duplicate pool name '" + pools[i].name + "'");
    }
  }
  if (!(fpr_target > 0.0 && fpr_target < 0.5)) throw ParameterError("fpr_target must lie in (0, 0.5)");
  if (!(spike_modulus > 0.0 && std::isfinite(spike_modulus))) throw ParameterError("spike_modulus must be > 0");
  if (bootstrap_resamples < 1) throw ParameterError("bootstrap_resamples must be at least 1");
  if (scheme == Scheme::RedGreen) redgreen.validate();
  if (scheme == Scheme::Binary && !(lambda > 0.0)) throw ParameterError("lambda must be > 0");
}

json ExperimentConfig::to_json() const {
  json pj = json::array();
  for (const auto& p : pools) pj.push_back(p.to_json());
  json j{{"scheme", std::string(inkmark::to_string(scheme))},
         {"fpr_target", fpr_target},
         {"spike_modulus", spike_modulus},
         {"bootstrap_resamples", bootstrap_resamples},
         {"key_policy", std::string(to_string(key_policy))},
         {"pools", pj}};
  if (scheme == Scheme::RedGreen) j["redgreen"] = redgreen.to_json();
  if (scheme == Scheme::Binary) j["binary"] = json{{"lambda", lambda}};
  if (timestamp) j["timestamp"] = *timestamp;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ParameterError("experiment config must be a JSON object");
  ExperimentConfig c;
  const std::string where = "experiment config";
  if (j.contains("scheme")) c.scheme = scheme_from_string(field<std::string>(j, "scheme", where));
  if (j.contains("redgreen")) c.redgreen = RedGreenParams::from_json(j.at("redgreen"));
  if (j.contains("binary")) c.lambda = field<double>(j.at("binary"), "lambda", "binary parameters");
  if (j.contains("fpr_target")) c.fpr_target = field<double>(j, "fpr_target", where);
  c.spike_modulus = field<double>(j, "spike_modulus", where);
  if (j.contains("bootstrap_resamples")) c.bootstrap_resamples = count_field(j, "bootstrap_resamples", where);
  if (j.contains("key_policy")) c.key_policy = key_policy_from_string(field<std::string>(j, "key_policy", where));
  if (j.contains("timestamp")) c.timestamp = field<std::string>(j, "timestamp", where);
  const auto pools = field<json>(j, "pools", where);
  if (!pools.is_array()) throw ParameterError("experiment config: 'pools' must be an array");
  for (const auto& p : pools) c.pools.push_back(PoolSpec::from_json(p, base_dir));
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read experiment config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParameterError("experiment config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

WatermarkKey pool_text_key(const ExperimentConfig& config, const Pool& pool, std::size_t index) {
  return WatermarkKey::from_seed(pool.key_seeds.at(index), kExperimentProvider, config.scheme, "1970-01-01T00:00:00Z");
}

std::vector<Pool> build_pools(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<Pool> out;
  out.reserve(config.pools.size());
  const std::size_t h = config.scheme == Scheme::RedGreen ? config.redgreen.context_width : 0;
  const std::uint64_t shared_key = derive_seed(seed, 0);

  for (std::size_t pi = 0; pi < config.pools.size(); ++pi) {
    Pool pool;
    pool.spec = config.pools[pi];
    const auto model = make_model(pool.spec, pool.peak_mass);
    const std::size_t v = model->vocab_size();
    pool.vocab_size = v;
    const std::uint64_t pool_seed = derive_seed(seed, pi + 1);

    double entropy_sum = 0.0;
    double spike_sum = 0.0;
    std::size_t steps = 0;
    const StepObserver observe = [&](const TokenDistribution& p, TokenId) {
      entropy_sum += shannon_entropy(p);
      spike_sum += spike_entropy(p, config.spike_modulus);
      ++steps;
    };

    for (std::size_t i = 0; i < pool.spec.n_texts; ++i) {
      const std::uint64_t key_seed =
          config.key_policy == KeyPolicy::PerText ? derive_seed(pool_seed, 2 * i) : shared_key;
      pool.key_seeds.push_back(key_seed);
      const WatermarkKey key = pool_text_key(config, pool, i);
      Rng rng(derive_seed(pool_seed, 2 * i + 1));
      std::vector<TokenId> prompt(h);
      for (auto& t : prompt) t = static_cast<TokenId>(rng.below(v));

      std::vector<TokenId> marked = prompt;
      std::vector<TokenId> generated;
      if (config.scheme == Scheme::RedGreen) {
        RedGreenWatermarker wm(key, config.redgreen, v);
        RedGreenSampler sampler(wm, rng);
        generated = generate(*model, prompt, sampler, pool.spec.text_len);
      } else {
        BinaryInjector injector(key, BinaryCodec(v), config.lambda, rng);
        generated = generate(*model, prompt, injector, pool.spec.text_len);
      }
      marked.insert(marked.end(), generated.begin(), generated.end());
      pool.watermarked.push_back(std::move(marked));

      PlainSampler plain(rng);
      std::vector<TokenId> text = prompt;
      const auto unmarked = generate(*model, prompt, plain, pool.spec.text_len, std::nullopt, observe);
      text.insert(text.end(), unmarked.begin(), unmarked.end());
      pool.plain.push_back(std::move(text));
    }
    pool.avg_entropy_bits = entropy_sum / static_cast<double>(steps);
    pool.avg_spike_entropy = spike_sum / static_cast<double>(steps);
    out.push_back(std::move(pool));
  }
  return out;
}

double detection_statistic(const ExperimentConfig& config, const Pool& pool, std::size_t index, bool watermarked) {
  const auto& text = watermarked ? pool.watermarked.at(index) : pool.plain.at(index);
  const WatermarkKey key = pool_text_key(config, pool, index);
  if (config.scheme == Scheme::RedGreen) {
    RedGreenDetector detector(key, config.redgreen.gamma, config.redgreen.context_width, pool.vocab_size);
    const auto c = detector.count_green(text);
    return green_z_score(c.green, c.total, config.redgreen.gamma);
  }
  return binary_statistic(BinaryDetector(key, BinaryCodec(pool.vocab_size)), text);
}

std::size_t minimum_calibration_texts(double fpr_target) {
  if (!(fpr_target > 0.0 && fpr_target < 0.5)) throw ParameterError("fpr_target must lie in (0, 0.5)");
  return static_cast<std::size_t>(std::ceil(1.0 / fpr_target - 1e-9));
}

double calibrate_threshold(std::vector<double> plain_scores, double fpr_target) {
  const std::size_t need = minimum_calibration_texts(fpr_target);
  if (plain_scores.size() < need) {
    throw ValidationError("too few plain texts to calibrate fpr_target " + std::to_string(fpr_target) + ": have " +
                          std::to_string(plain_scores.size()) + ", need at least " + std::to_string(need) +
                          " across all pools");
  }
  std::sort(plain_scores.begin(), plain_scores.end(), std::greater<>());
  const auto k = static_cast<std::size_t>(std::floor(fpr_target * static_cast<double>(plain_scores.size())));
  return std::nextafter(plain_scores[k], INFINITY);
}

namespace {

std::vector<RocPoint> roc_curve(const std::vector<double>& plain, const std::vector<double>& marked) {
  std::vector<double> all = plain;
  all.insert(all.end(), marked.begin(), marked.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  constexpr std::size_t kPoints = 101;
  std::vector<double> thresholds;
  if (all.size() <= kPoints) {
    thresholds = all;
  } else {
    for (std::size_t i = 0; i < kPoints; ++i) thresholds.push_back(all[i * (all.size() - 1) / (kPoints - 1)]);
  }
  std::vector<RocPoint> out;
  for (const double t : thresholds) {
    const auto fp = std::count_if(plain.begin(), plain.end(), [t](double s) { return s >= t; });
    const auto fn = std::count_if(marked.begin(), marked.end(), [t](double s) { return s < t; });
    out.push_back({t, static_cast<double>(fp) / static_cast<double>(plain.size()),
                   static_cast<double>(fn) / static_cast<double>(marked.size())});
  }
  return out;
}

}  // namespace

ExperimentReport run_fnr_experiment(const std::vector<Pool>& pools, const ExperimentConfig& config,
                                    std::uint64_t seed) {
  config.validate();
  if (pools.size() < 2) throw ParameterError("an experiment needs at least two pools");

  std::vector<std::vector<double>> plain(pools.size());
  std::vector<std::vector<double>> marked(pools.size());
  std::vector<double> pooled;
  for (std::size_t p = 0; p < pools.size(); ++p) {
    for (std::size_t i = 0; i < pools[p].plain.size(); ++i) {
      plain[p].push_back(detection_statistic(config, pools[p], i, false));
      marked[p].push_back(detection_statistic(config, pools[p], i, true));
    }
    pooled.insert(pooled.end(), plain[p].begin(), plain[p].end());
  }

  ExperimentReport r;
  r.threshold = calibrate_threshold(pooled, config.fpr_target);
  std::vector<std::vector<std::uint8_t>> missed(pools.size());
  for (std::size_t p = 0; p < pools.size(); ++p) {
    PoolResult res;
    res.name = pools[p].spec.name;
    res.avg_entropy_bits = pools[p].avg_entropy_bits;
    res.avg_spike_entropy = pools[p].avg_spike_entropy;
    res.n_texts = pools[p].plain.size();
    res.text_len = pools[p].spec.text_len;
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (std::size_t i = 0; i < res.n_texts; ++i) {
      if (plain[p][i] >= r.threshold) ++fp;
      const bool miss = marked[p][i] < r.threshold;
      missed[p].push_back(miss ? 1 : 0);
      if (miss) ++fn;
    }
    res.fpr = static_cast<double>(fp) / static_cast<double>(res.n_texts);
    res.fnr = static_cast<double>(fn) / static_cast<double>(res.n_texts);
    res.fpr_ci = wilson_interval(fp, res.n_texts);
    res.fnr_ci = wilson_interval(fn, res.n_texts);
    res.roc = roc_curve(plain[p], marked[p]);
    r.pools.push_back(std::move(res));
  }

  const auto by_entropy = [](const PoolResult& a, const PoolResult& b) { return a.avg_entropy_bits < b.avg_entropy_bits; };
  const auto low = static_cast<std::size_t>(std::min_element(r.pools.begin(), r.pools.end(), by_entropy) - r.pools.begin());
  const auto high = static_cast<std::size_t>(std::max_element(r.pools.begin(), r.pools.end(), by_entropy) - r.pools.begin());
  r.low_pool = r.pools[low].name;
  r.high_pool = r.pools[high].name;
  r.disparity = r.pools[low].fnr - r.pools[high].fnr;

  Rng rng(derive_seed(seed, 0xb0075));
  const auto resampled_fnr = [&rng](const std::vector<std::uint8_t>& m) {
    std::size_t miss = 0;
    for (std::size_t i = 0; i < m.size(); ++i) miss += m[rng.below(m.size())];
    return static_cast<double>(miss) / static_cast<double>(m.size());
  };
  std::vector<double> replicates;
  replicates.reserve(config.bootstrap_resamples);
  for (std::size_t b = 0; b < config.bootstrap_resamples; ++b) {
    const double lo = resampled_fnr(missed[low]);
    replicates.push_back(lo - resampled_fnr(missed[high]));
  }
  r.disparity_ci = percentile_interval(std::move(replicates), 0.95);

  r.metadata = json{{"seed", seed},
                    {"scheme", std::string(to_string(config.scheme))},
                    {"timestamp", config.timestamp ? *config.timestamp : utc_timestamp()},
                    {"generator", std::string("inkmark ") + kVersion},
                    {"config", config.to_json()}};
  r.metadata["config"].erase("timestamp");
  return r;
}

ExperimentReport run_experiment(const ExperimentConfig& config, std::uint64_t seed) {
  return run_fnr_experiment(build_pools(config, seed), config, seed);
}

json ExperimentReport::to_json() const {
  json pj = json::array();
  for (const auto& p : pools) {
    json roc = json::array();
    for (const auto& pt : p.roc) roc.push_back(json{{"threshold", pt.threshold}, {"fpr", pt.fpr}, {"fnr", pt.fnr}});
    pj.push_back(json{{"name", p.name},
                      {"avg_entropy_bits", p.avg_entropy_bits},
                      {"avg_spike_entropy", p.avg_spike_entropy},
                      {"fpr", p.fpr},
                      {"fnr", p.fnr},
                      {"fpr_ci", interval_json(p.fpr_ci)},
                      {"fnr_ci", interval_json(p.fnr_ci)},
                      {"n_texts", p.n_texts},
                      {"text_len", p.text_len},
                      {"roc", roc}});
  }
  return json{{"metadata", metadata},
              {"threshold", threshold},
              {"pools", pj},
              {"disparity", json{{"low_pool", low_pool},
                                 {"high_pool", high_pool},
                                 {"value", disparity},
                                 {"ci", interval_json(disparity_ci)}}}};
}

ExperimentReport ExperimentReport::from_json(const json& j) {
  try {
    ExperimentReport r;
    r.metadata = j.at("metadata");
    r.threshold = j.at("threshold").get<double>();
    for (const auto& pj : j.at("pools")) {
      PoolResult p;
      p.name = pj.at("name").get<std::string>();
      p.avg_entropy_bits = pj.at("avg_entropy_bits").get<double>();
      p.avg_spike_entropy = pj.at("avg_spike_entropy").get<double>();
      p.fpr = pj.at("fpr").get<double>();
      p.fnr = pj.at("fnr").get<double>();
      p.fpr_ci = interval_from(pj.at("fpr_ci"));
      p.fnr_ci = interval_from(pj.at("fnr_ci"));
      p.n_texts = pj.at("n_texts").get<std::size_t>();
      p.text_len = pj.at("text_len").get<std::size_t>();
      for (const auto& pt : pj.at("roc")) {
        p.roc.push_back({pt.at("threshold").get<double>(), pt.at("fpr").get<double>(), pt.at("fnr").get<double>()});
      }
      r.pools.push_back(std::move(p));
    }
    const auto& d = j.at("disparity");
    r.low_pool = d.at("low_pool").get<std::string>();
    r.high_pool = d.at("high_pool").get<std::string>();
    r.disparity = d.at("value").get<double>();
    r.disparity_ci = interval_from(d.at("ci"));
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed experiment report: ") + e.what());
  }
}

double soft_rule_modulus(double gamma, double delta) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ParameterError("gamma must lie in the open interval (0, 1)");
  if (!(delta >= 0.0 && std::isfinite(delta))) throw ParameterError("delta must be a finite value >= 0");
  const double a = std::expm1(delta);
  return (1.0 - gamma) * a / (1.0 + a * gamma);
}

json OperatingPointReport::to_json() const {
  return json{{"seed", seed},
              {"vocab_size", vocab_size},
              {"gamma", gamma},
              {"delta", delta},
              {"spike_modulus", spike_modulus},
              {"peak_mass", peak_mass},
              {"target_spike_entropy", target_spike_entropy},
              {"avg_spike_entropy", avg_spike_entropy},
              {"text_len", text_len},
              {"n_trials", n_trials},
              {"threshold_sigmas", threshold_sigmas},
              {"fnr", fnr},
              {"fnr_ci", interval_json(fnr_ci)},
              {"fpr", fpr},
              {"fpr_ci", interval_json(fpr_ci)},
              {"fpr_nominal", fpr_nominal},
              {"fpr_at_zero_sigma", fpr_at_zero_sigma},
              {"fnr_bound", fnr_bound},
              {"within_bound", within_bound()}};
}

OperatingPointReport reproduce_operating_point(std::uint64_t seed, std::size_t n_trials, std::size_t vocab_size) {
  OperatingPointReport r;
  r.seed = seed;
  r.vocab_size = vocab_size;
  r.n_trials = n_trials;
  r.spike_modulus = soft_rule_modulus(r.gamma, r.delta);
  r.peak_mass = SyntheticModel::peak_mass_for_spike_entropy(r.target_spike_entropy, r.spike_modulus, vocab_size);
  const SyntheticModel model(r.peak_mass, vocab_size, 0, PeakPlacement::Successor);

  RedGreenParams params;
  params.gamma = r.gamma;
  params.delta = r.delta;
  params.context_width = 1;
  params.mode = RedGreenMode::Soft;
  const std::uint64_t key_base = derive_seed(seed, 1);
  const TrialKeys keys = [key_base](std::size_t trial) {
    return WatermarkKey::from_seed(derive_seed(key_base, trial), kExperimentProvider, Scheme::RedGreen,
                                   "1970-01-01T00:00:00Z");
  };
  const auto est = estimate_error_rates(model, keys, params, n_trials, r.text_len, r.threshold_sigmas,
                                        r.spike_modulus, derive_seed(seed, 2));
  r.avg_spike_entropy = est.avg_spike_entropy;
  if (std::abs(r.avg_spike_entropy - r.target_spike_entropy) > 0.01) {
    throw Error("operating point calibration drifted: average spike entropy " + std::to_string(r.avg_spike_entropy));
  }
  r.fnr = est.fnr;
  r.fnr_ci = est.fnr_ci;
  r.fpr = est.fpr;
  r.fpr_ci = est.fpr_ci;
  r.fpr_nominal = normal_upper_tail(r.threshold_sigmas);
  const auto nonneg = std::count_if(est.z_plain.begin(), est.z_plain.end(), [](double z) { return z >= 0.0; });
  r.fpr_at_zero_sigma = static_cast<double>(nonneg) / static_cast<double>(est.z_plain.size());
  return r;
}

}  // namespace inkmark

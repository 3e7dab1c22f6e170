// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "inkmark/attacks.hpp"
#include "inkmark/binary.hpp"
#include "inkmark/clearinghouse.hpp"
#include "inkmark/crypto.hpp"
#include "inkmark/entropy.hpp"
#include "inkmark/experiments.hpp"
#include "inkmark/model.hpp"
#include "inkmark/redgreen.hpp"
#include "inkmark/report.hpp"
#include "inkmark/service.hpp"
#include "inkmark/stats.hpp"

using namespace inkmark;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kStamp = "2024-01-01T00:00:00Z";

struct Outcome {
  bool ok = true;
  std::ostringstream detail;

  void check(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

std::string fmt(double x, int prec = 4) {
  std::ostringstream s;
  s << std::setprecision(prec) << x;
  return s.str();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

WatermarkKey key(std::uint64_t seed, Scheme s) { return WatermarkKey::from_seed(seed, "acceptance", s, kStamp); }

// Fixed next-token distribution regardless of context.
struct FixedModel final : TokenModel {
  TokenDistribution d;
  explicit FixedModel(TokenDistribution x) : d(std::move(x)) {}
  std::size_t vocab_size() const override { return d.size(); }
  TokenDistribution next_distribution(const GenerationContext&) const override { return d; }
};

// ---------------------------------------------------------------------------

void ac1(Outcome& o) {
  const std::size_t n_texts = 1000000;
  const std::size_t t = 20;
  const std::size_t v = 1000;
  RedGreenDetector det(key(1, Scheme::RedGreen), 0.5, 1, v);
  Rng rng(101);
  // One context token then T scored tokens.
  std::vector<TokenId> text(t + 1);
  std::uint64_t all_green = 0;
  for (std::size_t i = 0; i < n_texts; ++i) {
    for (auto& x : text) x = static_cast<TokenId>(rng.below(v));
    all_green += det.count_green(text).green == t;
  }
  const double mean = static_cast<double>(n_texts) * std::ldexp(1.0, -static_cast<int>(t));
  const auto region = poisson_acceptance(mean, 0.99);
  o.detail << "all-green " << all_green << " of " << n_texts << ", expected " << fmt(mean) << ", 99% region ["
           << region.lower << ", " << region.upper << "] ";
  o.check(region.contains(all_green), "count outside Poisson region");
}

void ac2(Outcome& o) {
  const auto r = reproduce_operating_point(1, 10000, 1000);
  o.detail << "avg spike " << fmt(r.avg_spike_entropy, 6) << " (z=" << fmt(r.spike_modulus, 6) << "), FNR "
           << fmt(r.fnr) << " over " << r.n_trials << " (bound 0.014), FPR " << fmt(r.fpr) << " ";
  o.check(std::abs(r.avg_spike_entropy - 0.8) < 1e-6, "source not at spike entropy 0.8");
  o.check(r.n_trials == 10000 && r.text_len == 200 && r.threshold_sigmas == 4.0, "operating point parameters");
  o.check(r.fnr <= 0.014, "FNR above bound");
}

void ac3(Outcome& o) {
  // Plain text: every bit's score is Exp(1), so the centered mean has sd 1/sqrt(n).
  {
    const std::size_t v = 1024;
    const BinaryDetector det(key(3, Scheme::Binary), BinaryCodec(v));
    Rng rng(303);
    std::vector<TokenId> text(10001);
    for (auto& x : text) x = static_cast<TokenId>(rng.below(v));
    const auto s = det.score_prefix(text, 1);
    const double n = static_cast<double>(s.bits_scored);
    const double m = s.centered_score / n;
    o.detail << "plain: " << s.bits_scored << " bits, centered mean " << fmt(m) << " (limit " << fmt(3 / std::sqrt(n))
             << "); ";
    o.check(s.bits_scored >= 100000, "too few plain bits");
    o.check(std::abs(m) <= 3.0 / std::sqrt(n), "plain centered mean");
  }
  // Watermarked fair-coin stream.
  {
    const FixedModel coin(TokenDistribution::uniform(2));
    const auto k = key(4, Scheme::Binary);
    Rng rng(404);
    const auto g = inject_binary(coin, {}, k, BinaryCodec(2), 8.0, rng, 100100);
    const BinaryDetector det(k, BinaryCodec(2));
    const auto s = det.score_prefix(g.tokens, *g.state.activation_index);
    const double per_bit = s.centered_score / static_cast<double>(s.bits_scored);
    o.detail << "watermarked: " << s.bits_scored << " bits, centered score per bit " << fmt(per_bit, 6) << " vs ln2 "
             << fmt(std::log(2.0), 6);
    o.check(g.state.activated, "never activated");
    o.check(s.bits_scored >= 100000, "too few watermarked bits");
    o.check(std::abs(per_bit - std::log(2.0)) <= 0.02, "watermarked per-bit score");
  }
}

void ac4(Outcome& o) {
  const TokenDistribution p({0.3, 0.2, 0.15, 0.1, 0.1, 0.07, 0.05, 0.03});
  const FixedModel model(p);
  const BinaryCodec codec(p.size());
  const std::size_t n = 100000;
  const std::size_t len = 6;
  std::vector<double> wm(p.size(), 0.0);
  std::vector<double> plain(p.size(), 0.0);
  std::size_t watermarked_tokens = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(505, i));
    const auto g = inject_binary(model, {}, key(derive_seed(506, i), Scheme::Binary), codec, 2.0, rng, len);
    wm[g.tokens.back()] += 1.0;
    watermarked_tokens += g.state.activated && *g.state.activation_index < len;
    Rng prng(derive_seed(507, i));
    PlainSampler ps(prng);
    plain[generate(model, std::vector<TokenId>{}, ps, len).back()] += 1.0;
  }
  // Two-sample homogeneity test on the 2 x V table.
  std::vector<double> observed;
  std::vector<double> expected;
  for (const auto* row : {&wm, &plain}) {
    for (std::size_t t = 0; t < p.size(); ++t) {
      observed.push_back((*row)[t]);
      expected.push_back((wm[t] + plain[t]) / 2.0);
    }
  }
  const double stat = chi_square_statistic(observed, expected);
  const double pv = chi_square_upper_tail(stat, static_cast<double>(p.size() - 1));
  o.detail << n << " samples per arm, " << watermarked_tokens << " under an active watermark, chi2 " << fmt(stat)
           << " (dof " << p.size() - 1 << "), p " << fmt(pv);
  o.check(watermarked_tokens >= n * 9 / 10, "watermark rarely active");
  o.check(pv > 0.01, "frequencies distinguishable at 0.01");
}

// Largest standardised centered score over prefixes.
double binary_statistic(const BinaryDetector& det, std::span<const TokenId> text) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& s : det.scan(text)) {
    if (s.bits_scored > 0) best = std::max(best, s.centered_score / std::sqrt(static_cast<double>(s.bits_scored)));
  }
  return best;
}

void ac5(Outcome& o) {
  const SyntheticModel model(0.2, 16, 0, PeakPlacement::Successor);
  const BinaryCodec codec(16);
  const auto k = key(5, Scheme::Binary);
  const BinaryDetector det(k, codec);
  const std::size_t len = 50;
  const double lambda = 16.0;
  const double target = 0.01;

  std::vector<double> plain_scores;
  for (std::size_t i = 0; i < 5000; ++i) {
    Rng rng(derive_seed(550, i));
    PlainSampler s(rng);
    plain_scores.push_back(binary_statistic(det, generate(model, std::vector<TokenId>{}, s, len)));
  }
  const double threshold = calibrate_threshold(plain_scores, target);
  const auto flagged_plain =
      std::count_if(plain_scores.begin(), plain_scores.end(), [&](double x) { return x >= threshold; });
  const double fpr = static_cast<double>(flagged_plain) / static_cast<double>(plain_scores.size());

  struct Session final : Sampler {
    Rng rng;
    BinaryInjector inj;
    Session(const WatermarkKey& key, const BinaryCodec& c, double lambda, std::uint64_t seed)
        : rng(seed), inj(key, c, lambda, rng) {}
    TokenId next(const TokenDistribution& p, const GenerationContext& c) override { return inj.next(p, c); }
  };
  std::uint64_t sessions = 0;
  const SessionFactory factory = [&]() -> std::unique_ptr<Sampler> {
    return std::make_unique<Session>(k, codec, lambda, derive_seed(551, sessions++));
  };
  const std::size_t n = 1000;
  std::uint64_t detected = 0;
  bool ratio_ok = true;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = prefix_specification_attack(model, factory, std::vector<TokenId>{}, len);
    ratio_ok = ratio_ok && r.prompts_issued == r.tokens.size() && r.tokens.size() == len;
    detected += binary_statistic(det, r.tokens) >= threshold;
  }
  std::size_t whole = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    Rng rng(derive_seed(552, i));
    whole += binary_statistic(det, inject_binary(model, {}, k, codec, lambda, rng, len).tokens) >= threshold;
  }
  const auto region = binomial_acceptance(n, fpr, 0.99);
  o.detail << "calibrated FPR " << fmt(fpr) << " on " << plain_scores.size() << " plain texts; attacked detected "
           << detected << "/" << n << ", 99% region [" << region.lower << ", " << region.upper
           << "]; invocation ratio " << len << ":1; unattacked detected " << whole << "/200";
  o.check(region.contains(detected), "attacked detection rate outside FPR region");
  o.check(ratio_ok, "invocation ratio");
}

void ac6(Outcome& o) {
  Rng rng(606);
  std::size_t bound_violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t v = 1 + rng.below(100);
    std::vector<double> p(v);
    double s = 0;
    for (auto& x : p) s += (x = rng.bernoulli(0.2) ? 0.0 : std::pow(rng.uniform(), 3.0));
    if (s == 0) p[0] = s = 1;
    for (auto& x : p) x /= s;
    const double h = shannon_entropy(TokenDistribution(p));
    bound_violations += !(h >= 0.0 && h <= std::log2(static_cast<double>(v)) + 1e-12);
  }
  std::size_t equality_failures = 0;
  for (int b = 0; b <= 12; ++b) {
    const std::size_t v = std::size_t{1} << b;
    equality_failures += shannon_entropy(TokenDistribution::uniform(v)) != static_cast<double>(b);
    equality_failures += shannon_entropy(TokenDistribution::point_mass(v, 0)) != 0.0;
  }
  double spike_err = 0;
  for (const double z : {0.5, 1.0, 2.0, 10.0}) {
    for (const std::size_t v : {2U, 10U, 1000U}) {
      spike_err = std::max(spike_err, std::abs(spike_entropy(TokenDistribution::point_mass(v, 1), z) - 1 / (1 + z)));
      spike_err = std::max(spike_err, std::abs(spike_entropy(TokenDistribution::uniform(v), z) - 1 / (1 + z / v)));
    }
  }
  o.detail << "fuzz bound violations " << bound_violations << ", equality failures " << equality_failures
           << ", spike max error " << fmt(spike_err, 3) << "; ";
  o.check(bound_violations == 0, "entropy bounds");
  o.check(equality_failures == 0, "equality cases");
  o.check(spike_err <= 1e-12, "spike closed forms");

  std::string letters;
  Rng lr(607);
  for (int i = 0; i < 100000; ++i) letters.push_back(static_cast<char>('a' + lr.below(26)));
  const double u = estimate_entropy_rate(letters).value;
  o.detail << "uniform letters " << fmt(u) << " vs " << fmt(std::log2(26.0)) << " (tol 0.3); ";
  o.check(std::abs(u - std::log2(26.0)) <= 0.3, "uniform-letter estimate");

  const fs::path dir = fs::path(INKMARK_TEST_DATA) / "corpora";
  const double rep = estimate_entropy_rate(read_file(dir / "repetitive.txt")).value;
  const double prose = estimate_entropy_rate(read_file(dir / "prose.txt")).value;
  const double rnd = estimate_entropy_rate(read_file(dir / "random.txt")).value;
  o.detail << "corpora repetitive " << fmt(rep) << " < prose " << fmt(prose) << " < random " << fmt(rnd);
  o.check(rep < prose && prose < rnd, "corpus ordering");
}

void ac7(Outcome& o) {
  const auto config = ExperimentConfig::load(fs::path(INKMARK_CONFIG_DIR) / "fairness.json");
  const auto r = run_experiment(config, 7);
  o.check(config.pools.size() == 4 && config.fpr_target == 1e-3, "config shape");
  double pooled_fp = 0;
  double pooled_n = 0;
  for (std::size_t i = 0; i < r.pools.size(); ++i) {
    const auto& p = r.pools[i];
    o.detail << p.name << " H=" << fmt(p.avg_entropy_bits) << " FNR=" << fmt(p.fnr) << "; ";
    pooled_fp += p.fpr * static_cast<double>(p.n_texts);
    pooled_n += static_cast<double>(p.n_texts);
    if (i > 0) {
      o.check(p.avg_entropy_bits > r.pools[i - 1].avg_entropy_bits, "entropy not strictly increasing");
      o.check(p.fnr <= r.pools[i - 1].fnr, "FNR increases with entropy");
    }
  }
  o.detail << "pooled FPR " << fmt(pooled_fp / pooled_n) << ", disparity " << fmt(r.disparity) << " CI ["
           << fmt(r.disparity_ci.lower) << ", " << fmt(r.disparity_ci.upper) << "]";
  o.check(pooled_fp / pooled_n <= 1e-3 + 1e-12, "pooled FPR above target");
  o.check(r.low_pool == r.pools.front().name && r.high_pool == r.pools.back().name, "extreme pair");
  o.check(r.disparity > 0 && r.disparity_ci.lower > 0, "disparity CI includes 0");
}

std::vector<TokenId> rg_text(const WatermarkKey& k, std::size_t len, std::uint64_t seed) {
  const SyntheticModel model(0.3, 1000, 0, PeakPlacement::Successor);
  RedGreenWatermarker wm(k, {0.5, 2.0, 1, RedGreenMode::Soft}, 1000);
  Rng rng(seed);
  RedGreenSampler s(wm, rng);
  std::vector<TokenId> text{static_cast<TokenId>(rng.below(1000))};
  const auto g = generate(model, text, s, len);
  text.insert(text.end(), g.begin(), g.end());
  return text;
}

void ac8(Outcome& o) {
  const fs::path dir = fs::temp_directory_path() / "inkmark_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  ClearingHouseOptions opts;
  opts.registry_path = dir / "registry.jsonl";
  opts.audit_log_path = dir / "audit.jsonl";
  opts.budget_limit = 1000;
  opts.timestamp = [] { return std::string(kStamp); };
  ClearingHouse house(opts);
  DetectionService service(house);
  const int port = service.bind("127.0.0.1", 0);
  std::thread server([&] { service.listen(); });
  httplib::Client c("127.0.0.1", port);
  for (int i = 0; i < 400 && !c.Get("/v1/health"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));

  const json rg_params{{"scheme", "redgreen"}, {"gamma", 0.5}, {"delta", 2.0}, {"h", 1}, {"mode", "soft"},
                       {"vocab_size", 1000}};
  const json bin_params{{"scheme", "binary"}, {"vocab_size", 1000}, {"lambda", 16.0}};
  std::vector<WatermarkKey> rg_keys;
  bool registered = true;
  for (const char* id : {"north", "south"}) {
    const auto res = c.Post("/v1/providers", json{{"provider_id", id}, {"mode", "issuance"}, {"params", rg_params}}.dump(),
                            "application/json");
    registered = registered && res && res->status == 201;
    if (res && res->status != 201) o.detail << id << ": " << res->status << " " << res->body << "; ";
    if (res && res->status == 201) rg_keys.push_back(WatermarkKey::from_json(json::parse(res->body).at("key")));
  }
  const auto bkey = WatermarkKey::from_seed(8, "east", Scheme::Binary, kStamp);
  {
    const auto res = c.Post(
        "/v1/providers",
        json{{"provider_id", "east"}, {"mode", "handover"}, {"key", bkey.to_json()}, {"params", bin_params}}.dump(),
        "application/json");
    registered = registered && res && res->status == 201;
    if (res && res->status != 201) o.detail << "east: " << res->status << " " << res->body << "; ";
  }
  o.check(registered && rg_keys.size() == 2, "registration");
  if (!o.ok) {
    service.stop();
    server.join();
    return;
  }

  // The library's view of the same registry.
  std::vector<ProviderRecord> records;
  records.push_back({"east", bkey, SchemeParams::from_json(bin_params), std::nullopt, TokenizerMode::Word, ""});
  records.push_back({"north", rg_keys[0], SchemeParams::from_json(rg_params), std::nullopt, TokenizerMode::Word, ""});
  records.push_back({"south", rg_keys[1], SchemeParams::from_json(rg_params), std::nullopt, TokenizerMode::Word, ""});

  std::size_t mismatches = 0;
  std::size_t positives = 0;
  const SyntheticModel bmodel(0.2, 1000, 0, PeakPlacement::Successor);
  for (std::uint64_t i = 0; i < 500; ++i) {
    std::vector<TokenId> text;
    const std::size_t len = 20 + i % 80;
    switch (i % 5) {
      case 0:
      case 1: {
        Rng rng(derive_seed(800, i));
        text.resize(len);
        for (auto& x : text) x = static_cast<TokenId>(rng.below(1000));
        break;
      }
      case 2: text = rg_text(rg_keys[0], len, derive_seed(801, i)); break;
      case 3: text = rg_text(rg_keys[1], len, derive_seed(802, i)); break;
      default: {
        Rng rng(derive_seed(803, i));
        text = inject_binary(bmodel, {}, bkey, BinaryCodec(1000), 16.0, rng, len).tokens;
      }
    }
    const auto res = c.Post("/v1/detect", json{{"client_id", "parity"}, {"text", text}}.dump(), "application/json");
    const auto want = attribute(records, DetectionInput{std::nullopt, text}, DetectionPolicy{});
    positives += want.verdict;
    if (!res || res->status != 200 || json::parse(res->body) != want.to_json()) ++mismatches;
  }
  o.detail << "parity mismatches " << mismatches << "/500 (" << positives << " positive); ";
  o.check(mismatches == 0, "service and library disagree");

  // 100 concurrent clients share one identity with a budget of 1000, of
  // which 500 are already spent.
  std::atomic<int> admitted{0};
  std::atomic<int> limited{0};
  std::atomic<int> broken{0};
  const std::string body = json{{"client_id", "parity"}, {"text", std::vector<TokenId>{1, 2, 3, 4}}}.dump();
  std::vector<std::thread> clients;
  for (int t = 0; t < 100; ++t) {
    clients.emplace_back([&] {
      httplib::Client cc("127.0.0.1", port);
      for (int i = 0; i < 8; ++i) {
        const auto r = cc.Post("/v1/detect", body, "application/json");
        if (!r) {
          ++broken;
        } else if (r->status == 200) {
          ++admitted;
        } else if (r->status == 429 && r->has_header("Retry-After")) {
          ++limited;
        } else {
          ++broken;
        }
      }
    });
  }
  for (auto& t : clients) t.join();
  o.detail << "concurrent: admitted " << admitted << ", limited " << limited << ", other " << broken << "; ";
  o.check(admitted == 500 && limited == 300 && broken == 0, "rate limit admitted the wrong count");
  service.stop();
  server.join();

  const auto verified = AuditLog::verify(opts.audit_log_path);
  std::vector<std::string> lines;
  {
    std::ifstream in(opts.audit_log_path);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
  }
  // Every single-bit flip of a sample of entries.
  std::size_t flips = 0;
  std::size_t undetected = 0;
  for (const std::size_t victim : {std::size_t{0}, std::size_t{1}, lines.size() / 2, lines.size() - 1}) {
    for (std::size_t pos = 0; pos < lines[victim].size(); ++pos) {
      for (int bit = 0; bit < 8; ++bit) {
        auto tampered = lines;
        tampered[victim][pos] = static_cast<char>(tampered[victim][pos] ^ (1 << bit));
        ++flips;
        undetected += AuditLog::verify(tampered).ok;
      }
    }
  }
  o.detail << "audit entries " << verified.entries << " verify " << (verified.ok ? "ok" : verified.reason)
           << ", single-bit flips undetected " << undetected << "/" << flips;
  o.check(verified.ok && verified.entries == 1000, "audit log does not verify");
  o.check(undetected == 0, "tampering missed");
}

// Seeded pipelines whose outputs must be byte-identical run to run.
std::map<std::string, std::string> pipeline_outputs() {
  std::map<std::string, std::string> out;
  {
    json j;
    j["redgreen"] = rg_text(key(9, Scheme::RedGreen), 200, 901);
    Rng rng(902);
    j["binary"] = inject_binary(SyntheticModel(0.2, 1000, 0, PeakPlacement::Successor), {}, key(9, Scheme::Binary),
                                BinaryCodec(1000), 16.0, rng, 200)
                      .tokens;
    std::vector<std::string> docs{read_file(fs::path(INKMARK_TEST_DATA) / "corpora" / "prose.txt")};
    const auto ngram = NgramModel::train(docs, 3, NgramModel::kDefaultSmoothing, TokenizerMode::Word);
    Rng nrng(903);
    PlainSampler ps(nrng);
    j["ngram"] = ngram.decode(generate(ngram, std::vector<TokenId>{}, ps, 80));
    j["ngram_model"] = sha256_hex(ngram.to_json().dump());
    out["generation"] = canonical_json(j);
  }
  {
    const json cfg{{"scheme", "redgreen"},
                   {"redgreen", {{"gamma", 0.5}, {"delta", 2.0}, {"h", 1}, {"mode", "soft"}}},
                   {"fpr_target", 0.01},
                   {"spike_modulus", 1.0},
                   {"bootstrap_resamples", 300},
                   {"timestamp", kStamp},
                   {"pools",
                    {{{"name", "a"}, {"model", {{"kind", "synthetic"}, {"peak_mass", 0.8}, {"vocab_size", 500}}},
                      {"text_len", 80}, {"n_texts", 150}},
                     {{"name", "b"}, {"model", {{"kind", "synthetic"}, {"peak_mass", 0.3}, {"vocab_size", 500}}},
                      {"text_len", 80}, {"n_texts", 150}}}}};
    const auto report = run_experiment(ExperimentConfig::from_json(cfg), 11);
    const fs::path dir = fs::temp_directory_path() / "inkmark_acceptance_report";
    fs::remove_all(dir);
    std::string files;
    for (const auto& f : emit_report(report, dir)) files += f.filename().string() + "\n" + read_file(f);
    out["experiment"] = files;
  }
  out["operating_point"] = canonical_json(reproduce_operating_point(12, 300, 1000).to_json());
  return out;
}

// Digests recorded on linux x86_64 / gcc 11; they stand in for a second
// platform when only one is available.
const std::map<std::string, std::string> kGolden = {
    {"generation", "13f0cb81ed263ffd0f9e0aa83717d1cf011e32fc7394272688068b3e1d62878b"},
    {"experiment", "90408ad44fe96f4febb936d84bc9799de47f2ddbf537cdb22e815416d46b0a57"},
    {"operating_point", "1554ab901e064c9e37b56fcaaf141b9af30c78e203e32c108d4ac0829d72bffe"},
};

void ac9(Outcome& o) {
  const auto a = pipeline_outputs();
  const auto b = pipeline_outputs();
  for (const auto& [name, bytes] : a) {
    const auto digest = sha256_hex(bytes);
    o.detail << name << " " << digest.substr(0, 16) << " ";
    o.check(bytes == b.at(name), name + " differs between runs");
    o.check(digest == kGolden.at(name), name + " differs from the recorded digest " + digest);
  }
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<void(Outcome&)> run;
    double budget_seconds;
  };
  const std::vector<Criterion> criteria{
      {"AC1 hard red-list FPR law", ac1, 120},
      {"AC2 operating point FNR", ac2, 300},
      {"AC3 binary score expectations", ac3, 60},
      {"AC4 distribution preservation", ac4, 120},
      {"AC5 prefix-specification immunity", ac5, 180},
      {"AC6 entropy suite", ac6, 0},
      {"AC7 fairness disparity", ac7, 600},
      {"AC8 clearing-house parity and limits", ac8, 0},
      {"AC9 determinism", ac9, 0},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail << "[exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_seconds > 0 && secs > c.budget_seconds) {
      o.ok = false;
      o.detail << " [over the " << c.budget_seconds << " s budget]";
    }
    failures += !o.ok;
    std::cout << (o.ok ? "PASS " : "FAIL ") << c.name << " (" << fmt(secs, 3) << " s): " << o.detail.str() << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

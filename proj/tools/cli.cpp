#include "cli.hpp"

#include <algorithm>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include "CLI11.hpp"
#include "inkmark/attacks.hpp"
#include "inkmark/binary.hpp"
#include "inkmark/clock.hpp"
#include "inkmark/crypto.hpp"
#include "inkmark/entropy.hpp"
#include "inkmark/error.hpp"
#include "inkmark/experiments.hpp"
#include "inkmark/model.hpp"
#include "inkmark/redgreen.hpp"
#include "inkmark/report.hpp"
#include "inkmark/service.hpp"
#include "inkmark/version.hpp"
#include "json.hpp"

namespace inkmark::cli {

namespace {

using nlohmann::json;

constexpr const char* kEpoch = "1970-01-01T00:00:00Z";

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string format = "json";
  bool quiet = false;
};

class Session {
 public:
  Session(const Globals& g, std::ostream& out, std::ostream& err) : g_(g), out_(out), err_(err) {}

  /// The --seed value, or a fresh random one (reported on stderr).
  std::uint64_t seed() {
    if (g_.seed) return *g_.seed;
    if (!drawn_) {
      std::array<std::uint8_t, 8> b{};
      secure_random_bytes(b);
      std::uint64_t s = 0;
      for (const auto x : b) s = (s << 8) | x;
      drawn_ = s;
      note("seed: " + std::to_string(s));
    }
    return *drawn_;
  }
  bool seeded() const { return g_.seed.has_value(); }
  bool json_output() const { return g_.format == "json"; }

  void note(const std::string& msg) {
    if (!g_.quiet) err_ << msg << '\n';
  }

  void emit(const json& j) {
    if (json_output()) {
      out_ << canonical_json(j);
    } else {
      flatten(j, "");
    }
  }

  std::ostream& out() { return out_; }

 private:
  void flatten(const json& j, const std::string& prefix) {
    if (j.is_object()) {
      for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k);
      return;
    }
    out_ << prefix << ": ";
    if (j.is_array() && std::all_of(j.begin(), j.end(), [](const json& x) { return x.is_primitive(); })) {
      for (std::size_t i = 0; i < j.size(); ++i) out_ << (i ? " " : "") << scalar(j[i]);
    } else {
      out_ << scalar(j);
    }
    out_ << '\n';
  }
  static std::string scalar(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

  const Globals& g_;
  std::ostream& out_;
  std::ostream& err_;
  std::optional<std::uint64_t> drawn_;
};

std::string read_all(const std::string& path) {
  if (path == "-") return std::string(std::istreambuf_iterator<char>(std::cin), {});
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::vector<TokenId> parse_ids(const std::string& body) {
  std::vector<TokenId> ids;
  std::istringstream in(body);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream words(line);
    std::string w;
    while (words >> w) {
      char* end = nullptr;
      const unsigned long long v = std::strtoull(w.c_str(), &end, 10);
      if (*end != '\0' || w[0] == '-' || v > 0xffffffffULL) {
        throw ValidationError("line " + std::to_string(lineno) + ": '" + w + "' is not a token id");
      }
      ids.push_back(static_cast<TokenId>(v));
    }
  }
  return ids;
}

// ---- models ---------------------------------------------------------------

struct ModelOpts {
  std::string path;
  std::optional<double> peak_mass;
  std::size_t vocab_size = 0;
};

void add_model_opts(CLI::App* c, ModelOpts& m) {
  c->add_option("--model", m.path, "Trained n-gram model (JSON)");
  c->add_option("--peak-mass", m.peak_mass, "Synthetic source: mass of the designated token");
  c->add_option("--vocab-size", m.vocab_size, "Vocabulary size (synthetic source, or token-id input without --model)");
}

struct LoadedModel {
  std::unique_ptr<TokenModel> model;
  const NgramModel* ngram = nullptr;
};

LoadedModel load_model(const ModelOpts& m) {
  LoadedModel out;
  if (!m.path.empty()) {
    auto ng = std::make_unique<NgramModel>(NgramModel::load(m.path));
    out.ngram = ng.get();
    out.model = std::move(ng);
  } else if (m.peak_mass) {
    if (m.vocab_size < 2) throw ParameterError("--peak-mass needs --vocab-size >= 2");
    out.model = std::make_unique<SyntheticModel>(*m.peak_mass, m.vocab_size);
  } else {
    throw ParameterError("give --model PATH or --peak-mass P with --vocab-size V");
  }
  return out;
}

std::optional<NgramModel> load_vocab_model(const ModelOpts& m) {
  if (m.path.empty()) return std::nullopt;
  return NgramModel::load(m.path);
}

std::vector<TokenId> read_tokens(const std::string& body, const std::string& text_format, const NgramModel* ngram) {
  if (text_format == "ids") return parse_ids(body);
  if (!ngram) throw ParameterError("--text-format text needs --model for its vocabulary");
  return ngram->encode(body);
}

std::string render_tokens(std::span<const TokenId> ids, const std::string& text_format, const NgramModel* ngram) {
  if (text_format == "text") {
    if (!ngram) throw ParameterError("--text-format text needs --model for its vocabulary");
    return ngram->decode(ids) + "\n";
  }
  std::string s;
  for (const TokenId t : ids) s += std::to_string(t) + "\n";
  return s;
}

void add_text_format(CLI::App* c, std::string& tf) {
  c->add_option("--text-format", tf, "Token I/O: ids (one id per line) or text (model vocabulary)")
      ->check(CLI::IsMember({"ids", "text"}))
      ->capture_default_str();
}

// ---- watermark parameters -------------------------------------------------

struct RgOpts {
  double gamma = 0.5;
  double delta = 2.0;
  std::size_t h = 1;
  std::string mode = "soft";

  RedGreenParams params() const {
    RedGreenParams p;
    p.gamma = gamma;
    p.delta = delta;
    p.context_width = h;
    p.mode = redgreen_mode_from_string(mode);
    p.validate();
    return p;
  }
};

void add_rg_opts(CLI::App* c, RgOpts& o) {
  c->add_option("--gamma", o.gamma, "Green-list fraction")->capture_default_str();
  c->add_option("--delta", o.delta, "Soft-rule logit boost")->capture_default_str();
  c->add_option("--context-width", o.h, "Context width seeding the green list")->capture_default_str();
  auto* mode =
      c->add_option("--mode", o.mode, "Red/green rule")->check(CLI::IsMember({"hard", "soft"}))->capture_default_str();
  auto* hard = c->add_flag_callback("--hard", [&o] { o.mode = "hard"; }, "Same as --mode hard");
  auto* soft = c->add_flag_callback("--soft", [&o] { o.mode = "soft"; }, "Same as --mode soft");
  hard->excludes(soft);
  mode->excludes(hard)->excludes(soft);
}

void check_scheme(const WatermarkKey& key, const std::string& scheme) {
  if (!scheme.empty() && scheme != to_string(key.scheme())) {
    throw ValidationError("key scheme '" + std::string(to_string(key.scheme())) + "' does not match --scheme " +
                          scheme);
  }
}

/// A provider-side watermarking session that owns its randomness.
class OwnedSession final : public Sampler {
 public:
  OwnedSession(const WatermarkKey& key, const RedGreenParams& rg, double lambda, std::size_t vocab,
               std::uint64_t seed)
      : rng_(seed) {
    if (key.scheme() == Scheme::RedGreen) {
      wm_ = std::make_unique<RedGreenWatermarker>(key, rg, vocab);
      sampler_ = std::make_unique<RedGreenSampler>(*wm_, rng_);
    } else {
      sampler_ = std::make_unique<BinaryInjector>(key, BinaryCodec(vocab), lambda, rng_);
    }
  }
  TokenId next(const TokenDistribution& p, const GenerationContext& c) override { return sampler_->next(p, c); }
  const BinaryInjector* binary() const { return dynamic_cast<const BinaryInjector*>(sampler_.get()); }

 private:
  Rng rng_;
  std::unique_ptr<RedGreenWatermarker> wm_;
  std::unique_ptr<Sampler> sampler_;
};

json detect_json(const WatermarkKey& key, std::span<const TokenId> ids, std::size_t vocab, const RedGreenParams& rg,
                 std::optional<double> threshold, double fpr, std::size_t window, PValueMethod method) {
  json j;
  if (key.scheme() == Scheme::RedGreen) {
    RedGreenDetector det(key, rg.gamma, rg.context_width, vocab);
    const double t = threshold.value_or(4.0);
    j = window > 0 ? det.detect_windowed(ids, window, t).to_json() : det.detect(ids, t, method).to_json();
  } else {
    BinaryDetector det(key, BinaryCodec(vocab));
    j = threshold ? det.detect(ids, *threshold).to_json() : det.detect_at_fpr(ids, fpr).to_json();
  }
  j["scheme"] = std::string(to_string(key.scheme()));
  j["provider_id"] = key.provider_id();
  if (key.scheme() == Scheme::RedGreen) {
    j["params"] = json{{"gamma", rg.gamma}, {"h", rg.context_width}, {"vocab_size", vocab}, {"window", window}};
  } else {
    j["params"] = json{{"bits_per_token", BinaryCodec(vocab).bits_per_token()}, {"vocab_size", vocab}};
    if (threshold) {
      j["params"]["threshold"] = *threshold;
    } else {
      j["params"]["fpr"] = fpr;
    }
  }
  return j;
}

// ---- subcommands ----------------------------------------------------------

struct KeygenOpts {
  std::string provider;
  std::string scheme = "redgreen";
  std::string out;
};

int cmd_keygen(Session& s, const KeygenOpts& o) {
  const Scheme scheme = scheme_from_string(o.scheme);
  // Seeded keys are reproducible, so their timestamp must be too.
  const std::string created = std::getenv("SOURCE_DATE_EPOCH") ? utc_timestamp() : kEpoch;
  const WatermarkKey key =
      s.seeded() ? WatermarkKey::from_seed(s.seed(), o.provider, scheme, created) : WatermarkKey::generate(o.provider, scheme);
  if (o.out.empty()) {
    s.emit(key.to_json());
  } else {
    key.save(o.out);
    s.emit(json{{"path", o.out}, {"provider_id", key.provider_id()}, {"scheme_id", std::string(to_string(scheme))},
                {"created_at", key.created_at()}});
  }
  return 0;
}

struct TrainOpts {
  std::vector<std::string> corpus;
  int order = 3;
  double smoothing = NgramModel::kDefaultSmoothing;
  std::string tokenizer = "word";
  std::string out;
};

/// Regular files under each path, directories walked recursively in sorted order.
std::vector<std::filesystem::path> corpus_files(const std::vector<std::string>& paths) {
  namespace fs = std::filesystem;
  std::vector<fs::path> out;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file()) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      out.emplace_back(p);
    } else {
      throw IoError("corpus path " + p + " does not exist");
    }
  }
  if (out.empty()) throw ValidationError("no corpus files found");
  return out;
}

int cmd_train(Session& s, const TrainOpts& o) {
  std::vector<std::string> docs;
  for (const auto& p : corpus_files(o.corpus)) docs.push_back(read_all(p.string()));
  const auto model = NgramModel::train(docs, o.order, o.smoothing, tokenizer_mode_from_string(o.tokenizer));
  model.save(o.out);
  s.emit(json{{"model", o.out},
              {"order", model.order()},
              {"smoothing", model.smoothing()},
              {"tokenizer", std::string(to_string(model.tokenizer()))},
              {"vocab_size", model.vocab_size()},
              {"documents", docs.size()}});
  return 0;
}

struct GenerateOpts {
  ModelOpts model;
  std::string prompt;
  std::size_t length = 50;
  std::string watermark = "none";
  std::string key;
  RgOpts rg;
  double lambda = BinaryInjector::kDefaultLambda;
  std::string text_format = "ids";
  std::string out;
};

int cmd_generate(Session& s, const GenerateOpts& o) {
  const auto lm = load_model(o.model);
  const std::size_t v = lm.model->vocab_size();
  const auto prompt = o.prompt.empty() ? std::vector<TokenId>{} : read_tokens(o.prompt, o.text_format, lm.ngram);
  for (const TokenId t : prompt) {
    if (t >= v) throw ValidationError("prompt token " + std::to_string(t) + " outside vocabulary");
  }
  const std::uint64_t seed = s.seed();
  json j{{"watermark", o.watermark}, {"seed", seed}};
  std::vector<TokenId> tokens;
  if (o.watermark == "none") {
    Rng rng(seed);
    PlainSampler plain(rng);
    tokens = generate(*lm.model, prompt, plain, o.length);
  } else {
    if (o.key.empty()) throw ParameterError("--scheme " + o.watermark + " needs --key");
    const auto key = WatermarkKey::load(o.key);
    check_scheme(key, o.watermark);
    OwnedSession session(key, o.rg.params(), o.lambda, v, seed);
    tokens = generate(*lm.model, prompt, session, o.length);
    if (const auto* b = session.binary()) j["binary_state"] = b->state().to_json();
  }
  j["tokens"] = tokens;
  if (lm.ngram) j["text"] = lm.ngram->decode(tokens);
  if (!o.out.empty()) {
    write_file(o.out, render_tokens(tokens, o.text_format, lm.ngram));
    j["out"] = o.out;
  }
  if (s.json_output() || !o.out.empty()) {
    s.emit(j);
  } else {
    s.out() << render_tokens(tokens, o.text_format, lm.ngram);
  }
  return 0;
}

struct DetectOpts {
  std::string key;
  std::string scheme;
  std::string input = "-";
  std::string text_format = "ids";
  ModelOpts model;
  RgOpts rg;
  std::optional<double> threshold;
  double fpr = BinaryDetector::kDefaultFpr;
  std::size_t window = 0;
  std::string p_value = "normal";
};

int cmd_detect(Session& s, const DetectOpts& o) {
  const auto key = WatermarkKey::load(o.key);
  check_scheme(key, o.scheme);
  const auto ng = load_vocab_model(o.model);
  const std::size_t v = ng ? ng->vocab_size() : o.model.vocab_size;
  if (v < 2) throw ParameterError("detection needs --model or --vocab-size >= 2");
  const auto ids = read_tokens(read_all(o.input), o.text_format, ng ? &*ng : nullptr);
  if (ids.empty()) throw ValidationError("empty text");
  for (const TokenId t : ids) {
    if (t >= v) throw ValidationError("token id " + std::to_string(t) + " outside vocabulary");
  }
  RedGreenParams rg;
  rg.gamma = o.rg.gamma;
  rg.context_width = o.rg.h;
  rg.validate();
  const auto method = o.p_value == "exact" ? PValueMethod::ExactBinomial : PValueMethod::Normal;
  s.emit(detect_json(key, ids, v, rg, o.threshold, o.fpr, o.window, method));
  return 0;
}

struct EntropyOpts {
  std::string estimator;
  std::string input;
  std::string distribution;
  double modulus = 1.0;
  bool tokens = false;
};

int cmd_entropy(Session& s, const EntropyOpts& o) {
  const std::string estimator = !o.estimator.empty() ? o.estimator : o.distribution.empty() ? "matchlength" : "exact";
  if (estimator == "exact") {
    if (o.distribution.empty()) throw ParameterError("--estimator exact needs --distribution P1,P2,...");
    std::vector<double> p;
    std::stringstream in(o.distribution);
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        p.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ValidationError("'" + item + "' is not a probability");
      }
    }
    const TokenDistribution d(std::move(p));
    s.emit(json{{"estimator", std::string(to_string(EntropyEstimator::Exact))},
                {"shannon_bits", shannon_entropy(d)},
                {"shannon_nats", shannon_entropy_nats(d)},
                {"spike_entropy", spike_entropy(d, o.modulus)},
                {"modulus", o.modulus},
                {"support", d.size()}});
    return 0;
  }
  if (o.input.empty()) throw ParameterError("--estimator matchlength needs a FILE (- for stdin)");
  const std::string body = read_all(o.input);
  EntropyEstimate e;
  if (o.tokens) {
    const auto ids = parse_ids(body);
    e = estimate_entropy_rate(std::span<const std::uint32_t>(ids));
    e.unit = EntropyUnit::BitsPerToken;
  } else {
    e = estimate_entropy_rate(std::string_view(body));
  }
  s.emit(json{{"estimator", std::string(to_string(e.estimator))},
              {"unit", std::string(to_string(e.unit))},
              {"value", e.value},
              {"n_samples", e.n_samples}});
  return 0;
}

struct AttackOpts {
  std::string kind;
  ModelOpts model;
  std::string key;
  RgOpts rg;
  double lambda = BinaryInjector::kDefaultLambda;
  std::string prompt;
  std::size_t length = 50;
  std::string text_format = "ids";
  std::string input = "-";
  double fraction = 0.1;
  std::string separator;
  std::optional<double> threshold;
  double fpr = BinaryDetector::kDefaultFpr;
  std::string out;
};

int cmd_substitution(Session& s, const AttackOpts& o) {
  const auto ng = load_vocab_model(o.model);
  const std::size_t v = ng ? ng->vocab_size() : o.model.vocab_size;
  if (v < 2) throw ParameterError("substitution needs --model or --vocab-size");
  const auto ids = read_tokens(read_all(o.input), o.text_format, ng ? &*ng : nullptr);
  Rng rng(s.seed());
  const auto attacked = substitution_attack(ids, o.fraction, v, rng);
  if (!o.out.empty()) write_file(o.out, render_tokens(attacked, o.text_format, ng ? &*ng : nullptr));
  json j{{"attack", "substitution"}, {"fraction", o.fraction}, {"tokens", attacked}, {"length", attacked.size()}};
  if (!o.key.empty()) {
    const auto key = WatermarkKey::load(o.key);
    const auto rg = o.rg.params();
    j["before"] = detect_json(key, ids, v, rg, o.threshold, o.fpr, 0, PValueMethod::Normal);
    j["after"] = detect_json(key, attacked, v, rg, o.threshold, o.fpr, 0, PValueMethod::Normal);
  }
  if (s.json_output() || !o.out.empty()) {
    s.emit(j);
  } else {
    s.out() << render_tokens(attacked, o.text_format, ng ? &*ng : nullptr);
  }
  return 0;
}

int cmd_emoji(Session& s, const AttackOpts& o) {
  const auto lm = load_model(o.model);
  const std::size_t v = lm.model->vocab_size();
  const auto key = WatermarkKey::load(o.key);
  if (key.scheme() != Scheme::RedGreen) throw ParameterError("the emoji attack targets red/green keys");
  if (o.separator.empty()) throw ParameterError("--kind emoji needs --separator");
  std::optional<TokenId> sep;
  if (lm.ngram) sep = lm.ngram->vocabulary().find(o.separator);
  if (!sep) {
    const auto ids = parse_ids(o.separator);
    if (ids.size() != 1) throw ParameterError("--separator must be one token (id or vocabulary entry)");
    sep = ids[0];
  }
  const auto prompt = o.prompt.empty() ? std::vector<TokenId>{} : read_tokens(o.prompt, o.text_format, lm.ngram);
  const auto rg = o.rg.params();
  OwnedSession session(key, rg, o.lambda, v, s.seed());
  const auto r = emoji_attack(*lm.model, *sep, prompt, session, o.length);
  const auto score = [&](const std::vector<TokenId>& t) {
    return detect_json(key, t, v, rg, o.threshold, o.fpr, 0, PValueMethod::Normal);
  };
  s.emit(json{{"attack", "emoji"},
              {"separator", *sep},
              {"raw", r.raw},
              {"stripped", r.stripped},
              {"before", score(r.raw)},
              {"after", score(r.stripped)}});
  return 0;
}

int cmd_prefix(Session& s, const AttackOpts& o) {
  const auto lm = load_model(o.model);
  const std::size_t v = lm.model->vocab_size();
  const auto key = WatermarkKey::load(o.key);
  const auto rg = o.rg.params();
  const std::uint64_t seed = s.seed();
  const auto prompt = o.prompt.empty() ? std::vector<TokenId>{} : read_tokens(o.prompt, o.text_format, lm.ngram);
  // Baseline: the same request served as one ordinary session.
  OwnedSession whole(key, rg, o.lambda, v, derive_seed(seed, 0));
  const auto plain_run = generate(*lm.model, prompt, whole, o.length);
  std::uint64_t sessions = 0;
  const SessionFactory factory = [&]() -> std::unique_ptr<Sampler> {
    return std::make_unique<OwnedSession>(key, rg, o.lambda, v, derive_seed(derive_seed(seed, 1), sessions++));
  };
  const auto r = prefix_specification_attack(*lm.model, factory, prompt, o.length);
  json j{{"attack", "prefix"},
         {"tokens", r.tokens},
         {"prompts_issued", r.prompts_issued},
         {"invocation_ratio", std::to_string(r.prompts_issued) + ":1"}};
  const auto score = [&](const std::vector<TokenId>& t) {
    return detect_json(key, t, v, rg, std::nullopt, o.fpr, 0, PValueMethod::Normal);
  };
  const std::size_t min_len = key.scheme() == Scheme::RedGreen ? rg.context_width + 1 : 2;
  if (plain_run.size() >= min_len) {
    j["before"] = score(plain_run);
    j["after"] = score(r.tokens);
  }
  s.emit(j);
  return 0;
}

struct ExperimentOpts {
  std::string config;
  std::string out;
  std::string timestamp;
  std::size_t trials = 10000;
  std::size_t vocab_size = 1000;
};

int cmd_experiment_run(Session& s, const ExperimentOpts& o) {
  auto config = ExperimentConfig::load(o.config);
  if (!o.timestamp.empty()) config.timestamp = o.timestamp;
  const std::uint64_t seed = s.seed();
  const auto report = run_experiment(config, seed);
  const auto files = emit_report(report, o.out);
  json fj = json::array();
  for (const auto& f : files) fj.push_back(f.generic_string());
  json pools = json::array();
  for (const auto& p : report.pools) {
    pools.push_back(json{{"name", p.name}, {"avg_entropy_bits", p.avg_entropy_bits}, {"fpr", p.fpr}, {"fnr", p.fnr}});
  }
  s.emit(json{{"out_dir", o.out},
              {"files", fj},
              {"seed", seed},
              {"threshold", report.threshold},
              {"pools", pools},
              {"disparity", report.to_json().at("disparity")}});
  return 0;
}

int cmd_operating_point(Session& s, const ExperimentOpts& o) {
  const auto r = reproduce_operating_point(s.seed(), o.trials, o.vocab_size);
  if (!o.out.empty()) write_file(o.out, canonical_json(r.to_json()));
  s.emit(r.to_json());
  return 0;
}

struct ServeOpts {
  std::string config;
  std::string listen;
  std::optional<std::size_t> budget_limit;
  std::optional<long long> budget_window;
  std::string registry;
  std::string audit_log;
};

int cmd_serve(Session& s, const ServeOpts& o) {
  ServiceConfig cfg = o.config.empty() ? ServiceConfig{} : ServiceConfig::load(o.config);
  cfg.apply_environment([](const char* name) { return std::getenv(name); });
  if (!o.listen.empty()) {
    ServiceConfig::from_json(json{{"listen", o.listen}});
    const auto colon = o.listen.rfind(':');
    cfg.host = o.listen.substr(0, colon);
    cfg.port = std::stoi(o.listen.substr(colon + 1));
  }
  if (o.budget_limit) cfg.budget_limit = *o.budget_limit;
  if (o.budget_window) cfg.budget_window = std::chrono::seconds(*o.budget_window);
  if (!o.registry.empty()) cfg.registry_path = o.registry;
  if (!o.audit_log.empty()) cfg.audit_log_path = o.audit_log;

  ClearingHouse house(cfg.clearing_house_options());
  DetectionService service(house);

  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);
  const int port = service.bind(cfg.host, cfg.port);
  s.note("listening on " + cfg.host + ":" + std::to_string(port));
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&sigs, &sig);
    service.stop();
  });
  service.listen();
  waiter.join();
  s.note("stopped");
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"inkmark: statistical text watermarking, detection and evaluation", "inkmark"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every randomized step (random if omitted)");
  app.add_option("--format", g.format, "Report output format")
      ->check(CLI::IsMember({"json", "text"}))
      ->capture_default_str();
  app.add_flag("--quiet", g.quiet, "Suppress notes on stderr");

  KeygenOpts keygen;
  auto* c_keygen = app.add_subcommand("keygen", "Create a watermark key");
  c_keygen->add_option("--provider", keygen.provider, "Provider id")->required();
  c_keygen->add_option("--scheme", keygen.scheme, "Watermark scheme")
      ->check(CLI::IsMember({"redgreen", "binary"}))
      ->capture_default_str();
  c_keygen->add_option("--out", keygen.out, "Write the key here instead of stdout");

  TrainOpts train;
  auto* c_train = app.add_subcommand("train", "Train an n-gram model on text files (one document per file)");
  c_train->add_option("corpus,--corpus", train.corpus, "Corpus files or directories (UTF-8 text, one document per file)")
      ->required()
      ->expected(1, -1);
  c_train->add_option("--order", train.order, "n-gram order")->capture_default_str();
  c_train->add_option("--smoothing", train.smoothing, "Additive smoothing")->capture_default_str();
  c_train->add_option("--tokenizer", train.tokenizer, "Tokenizer")
      ->check(CLI::IsMember({"word", "byte"}))
      ->capture_default_str();
  c_train->add_option("--out", train.out, "Model output path")->required();

  GenerateOpts gen;
  auto* c_gen = app.add_subcommand("generate", "Generate text, optionally watermarked");
  add_model_opts(c_gen, gen.model);
  c_gen->add_option("--prompt", gen.prompt, "Prompt, read in --text-format");
  c_gen->add_option("--length", gen.length, "Tokens to generate")->capture_default_str();
  c_gen->add_option("--scheme,--watermark", gen.watermark, "Injection scheme")
      ->check(CLI::IsMember({"none", "redgreen", "binary"}))
      ->capture_default_str();
  c_gen->add_option("--key", gen.key, "Key file");
  add_rg_opts(c_gen, gen.rg);
  c_gen->add_option("--lambda", gen.lambda, "Binary scheme entropy gate (nats)")->capture_default_str();
  add_text_format(c_gen, gen.text_format);
  c_gen->add_option("--out", gen.out, "Write the tokens here in --text-format");

  DetectOpts det;
  auto* c_det = app.add_subcommand("detect", "Detect a watermark under a key");
  c_det->add_option("--key", det.key, "Key file")->required();
  c_det->add_option("--scheme", det.scheme, "Expected key scheme (checked against the key)")
      ->check(CLI::IsMember({"redgreen", "binary"}));
  c_det->add_option("--input", det.input, "Input file, - for stdin")->capture_default_str();
  add_text_format(c_det, det.text_format);
  c_det->add_option("--model", det.model.path, "Model whose vocabulary reads text input and fixes vocab size");
  c_det->add_option("--vocab-size", det.model.vocab_size, "Vocabulary size when no --model is given");
  c_det->add_option("--gamma", det.rg.gamma, "Green-list fraction")->capture_default_str();
  c_det->add_option("--context-width", det.rg.h, "Context width")->capture_default_str();
  c_det->add_option("--threshold-sigmas,--threshold", det.threshold,
                    "Red/green: z threshold in sigmas (default 4). Binary: fixed centered-score threshold");
  c_det->add_option("--fpr", det.fpr, "Binary: target false positive rate")->capture_default_str();
  c_det->add_option("--window", det.window, "Red/green: sliding window of scored tokens (0 = whole text)")
      ->capture_default_str();
  c_det->add_option("--p-value", det.p_value, "Red/green p-value")
      ->check(CLI::IsMember({"normal", "exact"}))
      ->capture_default_str();

  EntropyOpts ent;
  auto* c_ent = app.add_subcommand("entropy", "Entropy of a distribution or entropy-rate estimate of a text");
  c_ent->add_option("--estimator", ent.estimator,
                    "matchlength (entropy rate of FILE) or exact (entropies of --distribution); inferred if omitted")
      ->check(CLI::IsMember({"matchlength", "exact"}));
  c_ent->add_option("file,--input", ent.input, "Text file (- for stdin) for the match-length estimator");
  c_ent->add_flag("--tokens", ent.tokens, "Treat --input as token ids");
  c_ent->add_option("--distribution", ent.distribution, "Comma-separated probabilities");
  c_ent->add_option("--modulus", ent.modulus, "Spike entropy modulus z")->capture_default_str();

  AttackOpts atk;
  auto* c_atk = app.add_subcommand("attack", "Run an attack and report detection before and after");
  c_atk->add_option("--kind", atk.kind, "substitution: perturb --input; emoji, prefix: attack a live session")
      ->required()
      ->check(CLI::IsMember({"substitution", "emoji", "prefix"}));
  add_model_opts(c_atk, atk.model);
  c_atk->add_option("--key", atk.key, "Provider key file (required for emoji and prefix)");
  add_rg_opts(c_atk, atk.rg);
  c_atk->add_option("--lambda", atk.lambda, "Binary scheme entropy gate (nats)")->capture_default_str();
  c_atk->add_option("--prompt", atk.prompt, "Prompt, read in --text-format");
  c_atk->add_option("--length", atk.length, "Content tokens to generate")->capture_default_str();
  add_text_format(c_atk, atk.text_format);
  c_atk->add_option("--input", atk.input, "substitution: token file, - for stdin")->capture_default_str();
  c_atk->add_option("--fraction", atk.fraction, "substitution: fraction of tokens replaced")->capture_default_str();
  c_atk->add_option("--separator", atk.separator, "emoji: separator token (id or vocabulary entry)");
  c_atk->add_option("--threshold-sigmas,--threshold", atk.threshold, "Red/green z threshold (default 4)");
  c_atk->add_option("--fpr", atk.fpr, "Binary detection false positive rate")->capture_default_str();
  c_atk->add_option("--out", atk.out, "substitution: write the attacked tokens here");

  ExperimentOpts exp;
  auto* c_exp = app.add_subcommand("experiment", "Evaluation harness");
  c_exp->require_subcommand(1);
  auto* c_run = c_exp->add_subcommand("run", "Fairness experiment: pools, global threshold, FNR disparity");
  c_run->add_option("config", exp.config, "Experiment config JSON")->required();
  c_run->add_option("--out", exp.out, "Report directory")->required();
  c_run->add_option("--timestamp", exp.timestamp, "Timestamp recorded in the report metadata");
  auto* c_op = c_exp->add_subcommand("operating-point", "Spike entropy 0.8, 200 tokens, 4 sigma: FNR");
  c_op->add_option("--trials", exp.trials, "Monte Carlo trials")->capture_default_str();
  c_op->add_option("--vocab-size", exp.vocab_size, "Synthetic vocabulary size")->capture_default_str();
  c_op->add_option("--out", exp.out, "Also write the report here");

  ServeOpts srv;
  auto* c_srv = app.add_subcommand("serve", "Run the clearing-house HTTP service");
  c_srv->add_option("--config", srv.config, "Service config JSON");
  c_srv->add_option("--listen", srv.listen, "host:port (overrides config and INKMARK_LISTEN)");
  c_srv->add_option("--budget-limit", srv.budget_limit, "Queries per client per window");
  c_srv->add_option("--budget-window", srv.budget_window, "Budget window in seconds");
  c_srv->add_option("--registry", srv.registry, "Registry JSONL path");
  c_srv->add_option("--audit-log", srv.audit_log, "Audit log JSONL path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return 0;
    err << app.help();
    return 2;
  }

  Session s(g, out, err);
  try {
    if (c_keygen->parsed()) return cmd_keygen(s, keygen);
    if (c_train->parsed()) return cmd_train(s, train);
    if (c_gen->parsed()) return cmd_generate(s, gen);
    if (c_det->parsed()) return cmd_detect(s, det);
    if (c_ent->parsed()) return cmd_entropy(s, ent);
    if (c_atk->parsed()) {
      if (atk.kind == "substitution") return cmd_substitution(s, atk);
      if (atk.key.empty()) throw ParameterError("--kind " + atk.kind + " needs --key");
      return atk.kind == "emoji" ? cmd_emoji(s, atk) : cmd_prefix(s, atk);
    }
    if (c_run->parsed()) return cmd_experiment_run(s, exp);
    if (c_op->parsed()) return cmd_operating_point(s, exp);
    if (c_srv->parsed()) return cmd_serve(s, srv);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace inkmark::cli

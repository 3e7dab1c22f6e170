#include "inkmark/clearinghouse.hpp"

#include <algorithm>
#include <cmath>

#include "inkmark/binary.hpp"
#include "inkmark/clock.hpp"
#include "inkmark/crypto.hpp"

namespace inkmark {

using nlohmann::json;

void SchemeParams::validate() const {
  if (vocab_size < 2) throw ValidationError("vocab_size must be at least 2");
  if (scheme == Scheme::RedGreen) redgreen.validate();
  if (scheme == Scheme::Binary && !(lambda > 0.0)) throw ValidationError("lambda must be > 0");
}

json SchemeParams::to_json() const {
  json j = scheme == Scheme::RedGreen ? redgreen.to_json() : json{{"lambda", lambda}};
  j["scheme"] = std::string(to_string(scheme));
  j["vocab_size"] = vocab_size;
  return j;
}

SchemeParams SchemeParams::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("params must be a JSON object");
  SchemeParams p;
  try {
    p.scheme = scheme_from_string(j.at("scheme").get<std::string>());
    p.vocab_size = j.at("vocab_size").get<std::size_t>();
    if (p.scheme == Scheme::RedGreen) {
      json rg = j;
      rg.erase("scheme");
      rg.erase("vocab_size");
      p.redgreen = RedGreenParams::from_json(rg);
    } else {
      p.lambda = j.value("lambda", p.lambda);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed params: ") + e.what());
  } catch (const ParameterError& e) {
    throw ValidationError(e.what());
  }
  p.validate();
  return p;
}

void ProviderRecord::validate() const {
  if (provider_id.empty()) throw ValidationError("provider_id must not be empty");
  if (key.provider_id() != provider_id) throw ValidationError("key provider_id does not match the record");
  if (key.scheme() != params.scheme) throw ValidationError("key scheme does not match the scheme params");
  params.validate();
  if (vocabulary && vocabulary->size() != params.vocab_size) {
    throw ValidationError("vocabulary size does not match vocab_size");
  }
}

json ProviderRecord::to_json() const {
  json j{{"provider_id", provider_id},
         {"key", key.to_json()},
         {"params", params.to_json()},
         {"tokenizer", std::string(to_string(tokenizer))},
         {"registered_at", registered_at}};
  if (vocabulary) j["vocabulary"] = vocabulary->tokens();
  return j;
}

ProviderRecord ProviderRecord::from_json(const json& j) {
  try {
    ProviderRecord r{j.at("provider_id").get<std::string>(), WatermarkKey::from_json(j.at("key")),
                     SchemeParams::from_json(j.at("params")), std::nullopt,
                     tokenizer_mode_from_string(j.value("tokenizer", std::string("word"))),
                     j.value("registered_at", std::string())};
    if (j.contains("vocabulary")) r.vocabulary = Vocabulary(j.at("vocabulary").get<std::vector<std::string>>());
    r.validate();
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed provider record: ") + e.what());
  }
}

DetectionInput DetectionInput::from_json(const json& value) {
  DetectionInput in;
  if (value.is_string()) {
    in.text = value.get<std::string>();
    if (in.text->find_first_not_of(" \t\r\n\f\v") == std::string::npos) throw ValidationError("empty text");
    return in;
  }
  if (value.is_array()) {
    std::vector<TokenId> ids;
    for (const auto& v : value) {
      if (!v.is_number_integer() || v.get<long long>() < 0 || v.get<long long>() > 0xffffffffLL) {
        throw ValidationError("token ids must be non-negative 32-bit integers");
      }
      ids.push_back(v.get<TokenId>());
    }
    if (ids.empty()) throw ValidationError("empty text");
    in.tokens = std::move(ids);
    return in;
  }
  throw ValidationError("text must be a string or an array of token ids");
}

json DetectionInput::to_json() const { return text ? json(*text) : json(*tokens); }

std::string DetectionInput::digest() const { return sha256_hex(to_json().dump()); }

json Attribution::to_json() const {
  return json{{"verdict", verdict},
              {"provider_id", provider_id ? json(*provider_id) : json(nullptr)},
              {"score", score},
              {"p_value", p_value}};
}

std::optional<Attribution> detect_with_provider(const ProviderRecord& record, const DetectionInput& input,
                                                const DetectionPolicy& policy) {
  std::vector<TokenId> ids;
  if (input.tokens) {
    ids = *input.tokens;
  } else {
    if (!record.vocabulary) return std::nullopt;
    const auto toks = tokenize(*input.text, record.tokenizer);
    try {
      ids = encode_tokens(*record.vocabulary, toks);
    } catch (const ValidationError&) {
      return std::nullopt;
    }
  }
  const std::size_t v = record.params.vocab_size;
  if (std::any_of(ids.begin(), ids.end(), [v](TokenId t) { return t >= v; })) return std::nullopt;

  Attribution a;
  a.provider_id = record.provider_id;
  if (record.params.scheme == Scheme::RedGreen) {
    if (ids.size() <= record.params.redgreen.context_width) return std::nullopt;
    const auto d = detect_redgreen(ids, record.key, record.params.redgreen, v, policy.threshold_sigmas);
    a.verdict = d.verdict;
    a.score = d.z_score;
    a.p_value = d.p_value;
  } else {
    if (ids.size() < 2) return std::nullopt;
    const auto d = BinaryDetector(record.key, BinaryCodec(v)).detect_at_fpr(ids, policy.binary_fpr);
    a.verdict = d.verdict;
    a.score = d.centered_score;
    a.p_value = d.p_value;
  }
  return a;
}

Attribution attribute(const std::vector<ProviderRecord>& providers, const DetectionInput& input,
                      const DetectionPolicy& policy) {
  std::optional<Attribution> best_pos;
  std::optional<Attribution> best_any;
  const auto better = [](const Attribution& a, const Attribution& b) {
    if (a.p_value != b.p_value) return a.p_value < b.p_value;
    if (a.score != b.score) return a.score > b.score;
    return *a.provider_id < *b.provider_id;
  };
  for (const auto& rec : providers) {
    const auto a = detect_with_provider(rec, input, policy);
    if (!a) continue;
    if (!best_any || better(*a, *best_any)) best_any = a;
    if (a->verdict && (!best_pos || better(*a, *best_pos))) best_pos = a;
  }
  if (best_pos) return *best_pos;
  Attribution neg;
  if (best_any) {
    neg.score = best_any->score;
    neg.p_value = best_any->p_value;
  }
  return neg;
}

ProviderRegistry::ProviderRegistry(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty()) return;
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw ValidationError("registry " + path_.string() + " line " + std::to_string(lineno) + " is not valid JSON");
    }
    auto rec = ProviderRecord::from_json(j);
    if (records_.count(rec.provider_id)) {
      throw ValidationError("registry " + path_.string() + " repeats provider '" + rec.provider_id + "'");
    }
    records_.emplace(rec.provider_id, std::move(rec));
  }
}

void ProviderRegistry::append(const ProviderRecord& record) {
  record.validate();
  if (records_.count(record.provider_id)) {
    throw ConflictError("provider '" + record.provider_id + "' is already registered");
  }
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot append to registry " + path_.string());
    out << record.to_json().dump() << '\n';
    out.flush();
    if (!out) throw IoError("failed writing registry " + path_.string());
  }
  records_.emplace(record.provider_id, record);
}

std::vector<ProviderRecord> ProviderRegistry::records() const {
  std::vector<ProviderRecord> out;
  out.reserve(records_.size());
  for (const auto& [id, rec] : records_) out.push_back(rec);
  return out;
}

RateLimiter::RateLimiter(std::size_t limit, std::chrono::milliseconds window, Clock clock)
    : limit_(limit), window_(window), clock_(std::move(clock)) {
  if (limit < 1) throw ParameterError("budget limit must be at least 1");
  if (window.count() <= 0) throw ParameterError("budget window must be positive");
  if (!clock_) clock_ = [] { return std::chrono::steady_clock::now(); };
}

RateLimiter::Decision RateLimiter::acquire(const std::string& client_id) {
  const auto now = clock_();
  std::lock_guard lock(mu_);
  auto [it, fresh] = budgets_.try_emplace(client_id, Budget{now, 0});
  Budget& b = it->second;
  if (!fresh && now - b.window_start >= window_) b = Budget{now, 0};
  Decision d;
  if (b.used < limit_) {
    ++b.used;
    d.admitted = true;
    d.used = b.used;
    return d;
  }
  d.used = b.used;
  const auto left = std::chrono::duration<double>(b.window_start + window_ - now).count();
  d.retry_after_seconds = std::max(left, 0.0);
  return d;
}

json AuditEntry::body() const {
  return json{{"seq", seq},
              {"timestamp", timestamp},
              {"client_id", client_id},
              {"input_digest", input_digest},
              {"result", result.to_json()},
              {"prev_hash", prev_hash}};
}

json AuditEntry::to_json() const {
  json j = body();
  j["hash"] = hash;
  return j;
}

AuditEntry AuditEntry::from_json(const json& j) {
  try {
    AuditEntry e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.timestamp = j.at("timestamp").get<std::string>();
    e.client_id = j.at("client_id").get<std::string>();
    e.input_digest = j.at("input_digest").get<std::string>();
    const auto& r = j.at("result");
    e.result.verdict = r.at("verdict").get<bool>();
    if (!r.at("provider_id").is_null()) e.result.provider_id = r.at("provider_id").get<std::string>();
    e.result.score = r.at("score").get<double>();
    e.result.p_value = r.at("p_value").get<double>();
    e.prev_hash = j.at("prev_hash").get<std::string>();
    e.hash = j.at("hash").get<std::string>();
    return e;
  } catch (const json::exception& ex) {
    throw ValidationError(std::string("malformed audit entry: ") + ex.what());
  }
}

namespace {

std::string chain_hash(const std::string& prev, const json& body) { return sha256_hex(prev + body.dump()); }

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

AuditLog::AuditLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty()) return;
  std::error_code ec;
  if (std::filesystem::exists(path_, ec)) {
    const auto check = verify(path_);
    if (!check.ok) throw ValidationError("audit log " + path_.string() + " fails verification: " + check.reason);
    const auto prior = read(path_);
    if (!prior.empty()) {
      last_hash_ = prior.back().hash;
      next_seq_ = prior.back().seq + 1;
    }
  }
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw IoError("cannot open audit log " + path_.string());
}

AuditEntry AuditLog::append(const std::string& timestamp, const std::string& client_id,
                            const std::string& input_digest, const Attribution& result) {
  std::lock_guard lock(mu_);
  AuditEntry e;
  e.seq = next_seq_;
  e.timestamp = timestamp;
  e.client_id = client_id;
  e.input_digest = input_digest;
  e.result = result;
  e.prev_hash = last_hash_;
  e.hash = chain_hash(e.prev_hash, e.body());
  if (out_.is_open()) {
    out_ << e.to_json().dump() << '\n';
    out_.flush();
    if (!out_) throw IoError("failed writing audit log " + path_.string());
  }
  memory_.push_back(e);
  last_hash_ = e.hash;
  ++next_seq_;
  return e;
}

std::size_t AuditLog::size() const {
  std::lock_guard lock(mu_);
  return memory_.size();
}

std::vector<AuditEntry> AuditLog::entries() const {
  std::lock_guard lock(mu_);
  return memory_;
}

std::vector<AuditEntry> AuditLog::read(const std::filesystem::path& path) {
  std::vector<AuditEntry> out;
  for (const auto& line : read_lines(path)) {
    if (line.empty()) continue;
    try {
      out.push_back(AuditEntry::from_json(json::parse(line)));
    } catch (const json::parse_error&) {
      throw ValidationError("audit log line is not valid JSON");
    }
  }
  return out;
}

AuditVerification AuditLog::verify(const std::filesystem::path& path) { return verify(read_lines(path)); }

AuditVerification AuditLog::verify(const std::vector<std::string>& lines) {
  AuditVerification v;
  std::string prev = kGenesisHash;
  std::uint64_t seq = 0;
  const auto fail = [&v](std::size_t line, std::string why) {
    v.ok = false;
    v.first_bad_line = line;
    v.reason = std::move(why);
    return v;
  };
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty() && i + 1 == lines.size()) break;
    AuditEntry e;
    try {
      e = AuditEntry::from_json(json::parse(lines[i]));
    } catch (const std::exception&) {
      return fail(i + 1, "unparseable entry");
    }
    // Lines are written canonically; "1e-05" vs "1E-05" must not slip through.
    if (e.to_json().dump() != lines[i]) return fail(i + 1, "non-canonical entry");
    if (e.seq != seq) return fail(i + 1, "sequence gap");
    if (e.prev_hash != prev) return fail(i + 1, "broken chain link");
    if (chain_hash(e.prev_hash, e.body()) != e.hash) return fail(i + 1, "entry hash mismatch");
    prev = e.hash;
    ++seq;
    ++v.entries;
  }
  return v;
}

RegistrationRequest RegistrationRequest::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("registration must be a JSON object");
  RegistrationRequest r;
  try {
    r.provider_id = j.at("provider_id").get<std::string>();
    if (!j.contains("mode")) throw ValidationError("mode is required: issuance or handover");
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "issuance") {
      r.mode = KeyMode::Issuance;
    } else if (mode == "handover") {
      r.mode = KeyMode::HandOver;
    } else {
      throw ValidationError("mode must be issuance or handover");
    }
    if (j.contains("key")) r.key = WatermarkKey::from_json(j.at("key"));
    r.params = SchemeParams::from_json(j.at("params"));
    if (j.contains("tokenizer")) r.tokenizer = tokenizer_mode_from_string(j.at("tokenizer").get<std::string>());
    if (j.contains("vocabulary")) r.vocabulary = Vocabulary(j.at("vocabulary").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed registration: ") + e.what());
  } catch (const ParameterError& e) {
    throw ValidationError(e.what());
  }
  if (r.mode == KeyMode::Issuance && r.key) throw ValidationError("issuance mode must not carry a key");
  if (r.mode == KeyMode::HandOver && !r.key) throw ValidationError("handover mode requires a key");
  if (r.tokenizer == TokenizerMode::Byte && !r.vocabulary) r.vocabulary = byte_vocabulary();
  return r;
}

json RegistrationResult::to_json() const {
  json j{{"provider_id", provider_id}, {"registered_at", registered_at}, {"scheme", std::string(to_string(scheme))}};
  if (issued_key) j["key"] = issued_key->to_json();
  return j;
}

ClearingHouse::ClearingHouse(ClearingHouseOptions options)
    : options_(std::move(options)),
      registry_(options_.registry_path),
      snapshot_(std::make_shared<const std::vector<ProviderRecord>>(registry_.records())),
      limiter_(options_.budget_limit, options_.budget_window, options_.clock),
      log_(options_.audit_log_path) {}

std::string ClearingHouse::now() const { return options_.timestamp ? options_.timestamp() : utc_timestamp(); }

ClearingHouse::Snapshot ClearingHouse::snapshot() const {
  std::lock_guard lock(snapshot_mu_);
  return snapshot_;
}

RegistrationResult ClearingHouse::register_provider(const RegistrationRequest& request) {
  std::lock_guard lock(register_mu_);
  const std::string at = now();
  WatermarkKey key = request.key ? *request.key : WatermarkKey::generate(request.provider_id, request.params.scheme);
  ProviderRecord rec{request.provider_id, key, request.params, request.vocabulary, request.tokenizer, at};
  registry_.append(rec);
  auto next = std::make_shared<const std::vector<ProviderRecord>>(registry_.records());
  {
    std::lock_guard slock(snapshot_mu_);
    snapshot_ = std::move(next);
  }
  RegistrationResult r{rec.provider_id, at, rec.params.scheme, std::nullopt};
  if (request.mode == KeyMode::Issuance) r.issued_key = key;
  return r;
}

std::vector<std::string> ClearingHouse::provider_ids() const {
  const auto snap = snapshot();
  std::vector<std::string> ids;
  for (const auto& r : *snap) ids.push_back(r.provider_id);
  return ids;
}

Attribution ClearingHouse::detect_text(const std::string& client_id, const DetectionInput& input) {
  if (client_id.empty()) throw ValidationError("client_id must not be empty");
  if (!input.text && !input.tokens) throw ValidationError("empty text");
  const auto d = limiter_.acquire(client_id);
  if (!d.admitted) {
    throw RateLimitError("query budget of " + std::to_string(limiter_.limit()) + " exhausted for client '" +
                             client_id + "'",
                         d.retry_after_seconds);
  }
  const auto snap = snapshot();
  const Attribution a = attribute(*snap, input, options_.policy);
  log_.append(now(), client_id, input.digest(), a);
  return a;
}

}  // namespace inkmark

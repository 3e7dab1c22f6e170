#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "inkmark/error.hpp"
#include "inkmark/prf.hpp"
#include "inkmark/redgreen.hpp"
#include "inkmark/tokens.hpp"
#include "json.hpp"

namespace inkmark {

class ConflictError : public Error {
 public:
  using Error::Error;
};

class RateLimitError : public Error {
 public:
  RateLimitError(const std::string& what, double retry_after_seconds)
      : Error(what), retry_after_seconds_(retry_after_seconds) {}
  double retry_after_seconds() const noexcept { return retry_after_seconds_; }

 private:
  double retry_after_seconds_;
};

/// Detection-relevant parameters of a provider's watermark.
struct SchemeParams {
  Scheme scheme = Scheme::RedGreen;
  RedGreenParams redgreen;
  double lambda = 64.0;
  std::size_t vocab_size = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SchemeParams from_json(const nlohmann::json& j);
};

struct ProviderRecord {
  std::string provider_id;
  WatermarkKey key;
  SchemeParams params;
  /// Vocabulary used to tokenize raw-text queries; token-id queries need none.
  std::optional<Vocabulary> vocabulary;
  TokenizerMode tokenizer = TokenizerMode::Word;
  std::string registered_at;

  /// Throws ValidationError unless ids agree, the key scheme matches the
  /// params, and the vocabulary (if any) has vocab_size entries.
  void validate() const;
  /// Registry line. Carries the secret; never sent to clients.
  nlohmann::json to_json() const;
  static ProviderRecord from_json(const nlohmann::json& j);
};

/// Query text: raw UTF-8 or a token-id sequence.
struct DetectionInput {
  std::optional<std::string> text;
  std::optional<std::vector<TokenId>> tokens;

  /// Accepts a JSON string or an array of non-negative integers. Throws
  /// ValidationError for anything else or for empty input.
  static DetectionInput from_json(const nlohmann::json& value);
  nlohmann::json to_json() const;
  /// SHA-256 of the canonical JSON form.
  std::string digest() const;
};

struct DetectionPolicy {
  double threshold_sigmas = 4.0;
  double binary_fpr = 1e-3;
};

struct Attribution {
  bool verdict = false;
  std::optional<std::string> provider_id;
  double score = 0.0;
  double p_value = 1.0;

  nlohmann::json to_json() const;
  friend bool operator==(const Attribution&, const Attribution&) = default;
};

/// Scores `input` under one provider. Nullopt when the input cannot be
/// expressed in the provider's vocabulary or is too short to score.
std::optional<Attribution> detect_with_provider(const ProviderRecord& record, const DetectionInput& input,
                                                const DetectionPolicy& policy);

/// Best positive verdict (smallest p-value, then largest score, then
/// provider id), or a negative verdict carrying the best scores seen.
Attribution attribute(const std::vector<ProviderRecord>& providers, const DetectionInput& input,
                      const DetectionPolicy& policy);

/// Append-only JSONL provider registry.
class ProviderRegistry {
 public:
  /// Loads existing records; an absent file is an empty registry. An empty
  /// path keeps the registry in memory only.
  explicit ProviderRegistry(std::filesystem::path path = {});

  /// Throws ConflictError for a duplicate id.
  void append(const ProviderRecord& record);
  /// Sorted by provider id.
  std::vector<ProviderRecord> records() const;

 private:
  std::filesystem::path path_;
  std::map<std::string, ProviderRecord> records_;
};

/// Fixed-window per-client query budget.
class RateLimiter {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  struct Decision {
    bool admitted = false;
    /// Seconds until the client's window resets; 0 when admitted.
    double retry_after_seconds = 0.0;
    std::size_t used = 0;
  };

  RateLimiter(std::size_t limit, std::chrono::milliseconds window, Clock clock = {});

  /// Atomically checks and charges one query.
  Decision acquire(const std::string& client_id);

  std::size_t limit() const noexcept { return limit_; }
  std::chrono::milliseconds window() const noexcept { return window_; }

 private:
  struct Budget {
    std::chrono::steady_clock::time_point window_start;
    std::size_t used = 0;
  };

  std::size_t limit_;
  std::chrono::milliseconds window_;
  Clock clock_;
  std::mutex mu_;
  std::map<std::string, Budget> budgets_;
};

struct AuditEntry {
  std::uint64_t seq = 0;
  std::string timestamp;
  std::string client_id;
  std::string input_digest;
  Attribution result;
  std::string prev_hash;
  std::string hash;

  /// Everything except `hash`.
  nlohmann::json body() const;
  nlohmann::json to_json() const;
  static AuditEntry from_json(const nlohmann::json& j);
};

struct AuditVerification {
  bool ok = true;
  std::size_t entries = 0;
  /// 1-based line of the first entry that fails, when !ok.
  std::optional<std::size_t> first_bad_line;
  std::string reason;
};

/// Hash-chained JSONL log: hash = SHA-256(prev_hash ∥ canonical body).
/// Appends are serialised through one writer.
class AuditLog {
 public:
  static constexpr const char* kGenesisHash = "0000000000000000000000000000000000000000000000000000000000000000";

  /// Continues the chain of an existing file. An empty path keeps entries
  /// in memory only.
  explicit AuditLog(std::filesystem::path path = {});

  AuditEntry append(const std::string& timestamp, const std::string& client_id, const std::string& input_digest,
                    const Attribution& result);

  std::size_t size() const;
  std::vector<AuditEntry> entries() const;

  static std::vector<AuditEntry> read(const std::filesystem::path& path);
  static AuditVerification verify(const std::filesystem::path& path);
  static AuditVerification verify(const std::vector<std::string>& lines);

 private:
  mutable std::mutex mu_;
  std::filesystem::path path_;
  std::ofstream out_;
  std::vector<AuditEntry> memory_;
  std::string last_hash_ = kGenesisHash;
  std::uint64_t next_seq_ = 0;
};

enum class KeyMode {
  /// The clearing-house generates the key and returns it once.
  Issuance,
  /// The provider supplies its own key.
  HandOver,
};

struct RegistrationRequest {
  std::string provider_id;
  KeyMode mode = KeyMode::Issuance;
  /// Required for HandOver, forbidden for Issuance.
  std::optional<WatermarkKey> key;
  SchemeParams params;
  std::optional<Vocabulary> vocabulary;
  TokenizerMode tokenizer = TokenizerMode::Word;

  static RegistrationRequest from_json(const nlohmann::json& j);
};

struct RegistrationResult {
  std::string provider_id;
  std::string registered_at;
  Scheme scheme = Scheme::RedGreen;
  /// Only in Issuance mode.
  std::optional<WatermarkKey> issued_key;

  nlohmann::json to_json() const;
};

struct ClearingHouseOptions {
  std::filesystem::path registry_path;
  std::filesystem::path audit_log_path;
  std::size_t budget_limit = 1000;
  std::chrono::milliseconds budget_window{std::chrono::hours(1)};
  DetectionPolicy policy;
  RateLimiter::Clock clock;
  /// Timestamp source for records and log entries; utc_timestamp() if unset.
  std::function<std::string()> timestamp;
};

/// Thread-safe core of the service: readers work on an immutable registry
/// snapshot that registrations replace wholesale.
class ClearingHouse {
 public:
  explicit ClearingHouse(ClearingHouseOptions options);

  /// Throws ConflictError for a duplicate id and ValidationError for a bad
  /// request.
  RegistrationResult register_provider(const RegistrationRequest& request);

  std::vector<std::string> provider_ids() const;

  /// Throws RateLimitError when the client's budget is spent and
  /// ValidationError for an empty client id or input.
  Attribution detect_text(const std::string& client_id, const DetectionInput& input);

  const AuditLog& audit_log() const noexcept { return log_; }
  const DetectionPolicy& policy() const noexcept { return options_.policy; }

 private:
  using Snapshot = std::shared_ptr<const std::vector<ProviderRecord>>;
  Snapshot snapshot() const;
  std::string now() const;

  ClearingHouseOptions options_;
  std::mutex register_mu_;
  ProviderRegistry registry_;
  mutable std::mutex snapshot_mu_;
  Snapshot snapshot_;
  RateLimiter limiter_;
  AuditLog log_;
};

}  // namespace inkmark

#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>

#include "inkmark/clearinghouse.hpp"
#include "json.hpp"

namespace inkmark {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t budget_limit = 1000;
  std::chrono::seconds budget_window{3600};
  std::filesystem::path registry_path = "registry.jsonl";
  std::filesystem::path audit_log_path = "audit.jsonl";
  double threshold_sigmas = 4.0;
  double binary_fpr = 1e-3;

  /// Recognised keys: listen ("host:port"), budget_limit,
  /// budget_window_seconds, registry_path, audit_log_path, threshold_sigmas,
  /// binary_fpr. Unknown keys are rejected.
  static ServiceConfig from_json(const nlohmann::json& j);
  static ServiceConfig load(const std::filesystem::path& path);

  /// INKMARK_LISTEN, INKMARK_BUDGET_LIMIT, INKMARK_BUDGET_WINDOW,
  /// INKMARK_REGISTRY, INKMARK_AUDIT_LOG override the matching fields.
  void apply_environment(const std::function<const char*(const char*)>& getenv_fn);

  ClearingHouseOptions clearing_house_options() const;
  nlohmann::json to_json() const;
};

/// HTTP front end of a ClearingHouse.
///   POST /v1/providers   register (issuance or handover)
///   GET  /v1/providers   {"providers": [ids]}
///   POST /v1/detect      {client_id, text} -> {verdict, provider_id, score, p_value}
///   GET  /v1/health
class DetectionService {
 public:
  explicit DetectionService(ClearingHouse& house);
  ~DetectionService();
  DetectionService(const DetectionService&) = delete;
  DetectionService& operator=(const DetectionService&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port. Throws IoError.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace inkmark

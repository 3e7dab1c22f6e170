#include "inkmark/service.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "httplib.h"
#include "inkmark/version.hpp"

namespace inkmark {

using nlohmann::json;

namespace {

std::pair<std::string, int> parse_listen(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon == 0) throw ParameterError("listen address must be host:port, got '" + s + "'");
  const std::string port = s.substr(colon + 1);
  char* end = nullptr;
  const long p = std::strtol(port.c_str(), &end, 10);
  if (port.empty() || *end != '\0' || p < 0 || p > 65535) throw ParameterError("invalid port in '" + s + "'");
  return {s.substr(0, colon), static_cast<int>(p)};
}

std::size_t parse_count(const char* name, const std::string& v) {
  char* end = nullptr;
  const long long n = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || n < 1) throw ParameterError(std::string(name) + " must be a positive integer");
  return static_cast<std::size_t>(n);
}

}  // namespace

ServiceConfig ServiceConfig::from_json(const json& j) {
  if (!j.is_object()) throw ParameterError("service config must be a JSON object");
  ServiceConfig c;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "listen") {
        std::tie(c.host, c.port) = parse_listen(v.get<std::string>());
      } else if (k == "budget_limit") {
        c.budget_limit = parse_count("budget_limit", std::to_string(v.get<long long>()));
      } else if (k == "budget_window_seconds") {
        c.budget_window = std::chrono::seconds(parse_count("budget_window_seconds", std::to_string(v.get<long long>())));
      } else if (k == "registry_path") {
        c.registry_path = v.get<std::string>();
      } else if (k == "audit_log_path") {
        c.audit_log_path = v.get<std::string>();
      } else if (k == "threshold_sigmas") {
        c.threshold_sigmas = v.get<double>();
      } else if (k == "binary_fpr") {
        c.binary_fpr = v.get<double>();
      } else {
        throw ParameterError("unknown service config key '" + k + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ParameterError(std::string("malformed service config: ") + e.what());
  }
  if (!(c.binary_fpr > 0.0 && c.binary_fpr < 1.0)) throw ParameterError("binary_fpr must lie in (0, 1)");
  if (!std::isfinite(c.threshold_sigmas)) throw ParameterError("threshold_sigmas must be finite");
  return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read service config " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParameterError("service config " + path.string() + " is not valid JSON: " + e.what());
  }
}

void ServiceConfig::apply_environment(const std::function<const char*(const char*)>& getenv_fn) {
  if (const char* v = getenv_fn("INKMARK_LISTEN")) std::tie(host, port) = parse_listen(v);
  if (const char* v = getenv_fn("INKMARK_BUDGET_LIMIT")) budget_limit = parse_count("INKMARK_BUDGET_LIMIT", v);
  if (const char* v = getenv_fn("INKMARK_BUDGET_WINDOW")) {
    budget_window = std::chrono::seconds(parse_count("INKMARK_BUDGET_WINDOW", v));
  }
  if (const char* v = getenv_fn("INKMARK_REGISTRY")) registry_path = v;
  if (const char* v = getenv_fn("INKMARK_AUDIT_LOG")) audit_log_path = v;
}

ClearingHouseOptions ServiceConfig::clearing_house_options() const {
  ClearingHouseOptions o;
  o.registry_path = registry_path;
  o.audit_log_path = audit_log_path;
  o.budget_limit = budget_limit;
  o.budget_window = budget_window;
  o.policy.threshold_sigmas = threshold_sigmas;
  o.policy.binary_fpr = binary_fpr;
  return o;
}

json ServiceConfig::to_json() const {
  return json{{"listen", host + ":" + std::to_string(port)},
              {"budget_limit", budget_limit},
              {"budget_window_seconds", budget_window.count()},
              {"registry_path", registry_path.string()},
              {"audit_log_path", audit_log_path.string()},
              {"threshold_sigmas", threshold_sigmas},
              {"binary_fpr", binary_fpr}};
}

struct DetectionService::Impl {
  ClearingHouse* house;
  httplib::Server server;
};

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const RateLimitError& e) {
    res.set_header("Retry-After", std::to_string(static_cast<long long>(std::ceil(e.retry_after_seconds()))));
    reply(res, 429, json{{"error", e.what()}, {"retry_after_seconds", e.retry_after_seconds()}});
  } catch (const ConflictError& e) {
    reply(res, 409, json{{"error", e.what()}});
  } catch (const ValidationError& e) {
    reply(res, 400, json{{"error", e.what()}});
  } catch (const ParameterError& e) {
    reply(res, 400, json{{"error", e.what()}});
  } catch (const json::exception& e) {
    reply(res, 400, json{{"error", std::string("malformed JSON: ") + e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, json{{"error", e.what()}});
  }
}

}  // namespace

DetectionService::DetectionService(ClearingHouse& house) : impl_(std::make_unique<Impl>()) {
  impl_->house = &house;
  auto& srv = impl_->server;
  ClearingHouse* h = &house;
  srv.set_keep_alive_timeout(1);

  srv.Post("/v1/providers", [h](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto r = h->register_provider(RegistrationRequest::from_json(json::parse(req.body)));
      reply(res, 201, r.to_json());
    });
  });
  srv.Get("/v1/providers", [h](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, json{{"providers", h->provider_ids()}}); });
  });
  srv.Post("/v1/detect", [h](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      if (!body.is_object()) throw ValidationError("request must be a JSON object");
      if (!body.contains("client_id") || !body.at("client_id").is_string()) {
        throw ValidationError("client_id must be a string");
      }
      if (!body.contains("text")) throw ValidationError("empty text");
      const auto input = DetectionInput::from_json(body.at("text"));
      reply(res, 200, h->detect_text(body.at("client_id").get<std::string>(), input).to_json());
    });
  });
  srv.Get("/v1/health", [h](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, json{{"status", "ok"}, {"providers", h->provider_ids().size()}, {"version", kVersion}});
  });
}

DetectionService::~DetectionService() { stop(); }

int DetectionService::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  if (port == 0) {
    const int p = srv.bind_to_any_port(host);
    if (p < 0) throw IoError("cannot bind " + host);
    return p;
  }
  if (!srv.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void DetectionService::listen() { impl_->server.listen_after_bind(); }

void DetectionService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace inkmark

#include "inkmark/prf.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "inkmark/clock.hpp"
#include "inkmark/error.hpp"
#include "inkmark/rng.hpp"

namespace inkmark {

std::string_view to_string(Scheme scheme) {
  return scheme == Scheme::RedGreen ? "redgreen" : "binary";
}

Scheme scheme_from_string(std::string_view name) {
  if (name == "redgreen") return Scheme::RedGreen;
  if (name == "binary") return Scheme::Binary;
  throw ParameterError("unknown scheme '" + std::string(name) + "' (expected redgreen or binary)");
}

WatermarkKey::WatermarkKey(Secret secret, std::string provider_id, Scheme scheme, std::string created_at)
    : secret_(secret),
      provider_id_(std::move(provider_id)),
      scheme_(scheme),
      created_at_(created_at.empty() ? utc_timestamp() : std::move(created_at)) {
  if (provider_id_.empty()) throw ValidationError("provider_id must not be empty");
}

WatermarkKey WatermarkKey::generate(std::string provider_id, Scheme scheme) {
  Secret secret{};
  secure_random_bytes(secret);
  return WatermarkKey(secret, std::move(provider_id), scheme);
}

WatermarkKey WatermarkKey::from_seed(std::uint64_t seed, std::string provider_id, Scheme scheme,
                                     std::string created_at) {
  Secret secret{};
  SplitMix64 mix(seed);
  for (std::size_t i = 0; i < secret.size(); i += 8) {
    std::uint64_t w = mix.next();
    for (std::size_t b = 0; b < 8; ++b) {
      secret[i + b] = static_cast<std::uint8_t>(w >> (56 - 8 * b));
    }
  }
  return WatermarkKey(secret, std::move(provider_id), scheme, std::move(created_at));
}

std::string WatermarkKey::secret_hex() const { return to_hex(secret_); }

nlohmann::json WatermarkKey::to_json() const {
  return nlohmann::json{{"provider_id", provider_id_},
                        {"scheme_id", std::string(to_string(scheme_))},
                        {"secret_hex", secret_hex()},
                        {"created_at", created_at_}};
}

namespace {

const nlohmann::json& require_string(const nlohmann::json& j, const char* field) {
  if (!j.contains(field) || !j.at(field).is_string()) {
    throw ValidationError(std::string("key file: field '") + field + "' must be a string");
  }
  return j.at(field);
}

int lower_hex(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

}  // namespace

WatermarkKey WatermarkKey::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("key file: expected a JSON object");
  const auto provider = require_string(j, "provider_id").get<std::string>();
  const auto scheme_name = require_string(j, "scheme_id").get<std::string>();
  const auto hex = require_string(j, "secret_hex").get<std::string>();
  const auto created = require_string(j, "created_at").get<std::string>();

  Scheme scheme{};
  try {
    scheme = scheme_from_string(scheme_name);
  } catch (const ParameterError&) {
    throw ValidationError("key file: scheme_id must be 'redgreen' or 'binary'");
  }
  if (hex.size() != 2 * kSecretSize) {
    throw ValidationError("key file: secret must be exactly 32 bytes (64 hex characters), got " +
                          std::to_string(hex.size()) + " characters");
  }
  Secret secret{};
  for (std::size_t i = 0; i < kSecretSize; ++i) {
    const int hi = lower_hex(hex[2 * i]);
    const int lo = lower_hex(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw ValidationError("key file: secret_hex must be lowercase hexadecimal");
    secret[i] = static_cast<std::uint8_t>(hi * 16 + lo);
  }
  if (created.empty()) throw ValidationError("key file: created_at must not be empty");
  return WatermarkKey(secret, provider, scheme, created);
}

void WatermarkKey::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write key file " + path.string());
  out << to_json().dump(2) << '\n';
  if (!out) throw IoError("cannot write key file " + path.string());
}

WatermarkKey WatermarkKey::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read key file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("key file " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

namespace {

void append_u32_le(Sha256& h, std::uint32_t v) {
  const std::array<std::uint8_t, 4> bytes{static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                                          static_cast<std::uint8_t>(v >> 16),
                                          static_cast<std::uint8_t>(v >> 24)};
  h.update(bytes);
}

void append_tokens(Sha256& h, std::span<const TokenId> tokens) {
  // Batch the little-endian encoding to keep the number of update calls low.
  std::array<std::uint8_t, 256> buf{};
  std::size_t used = 0;
  for (const TokenId t : tokens) {
    buf[used++] = static_cast<std::uint8_t>(t);
    buf[used++] = static_cast<std::uint8_t>(t >> 8);
    buf[used++] = static_cast<std::uint8_t>(t >> 16);
    buf[used++] = static_cast<std::uint8_t>(t >> 24);
    if (used == buf.size()) {
      h.update(std::span(buf.data(), used));
      used = 0;
    }
  }
  if (used > 0) h.update(std::span(buf.data(), used));
}

std::uint64_t leading_word(const Digest256& d) {
  std::uint64_t w = 0;
  for (std::size_t i = 0; i < 8; ++i) w = (w << 8) | d[i];
  return w;
}

}  // namespace

Prf::Prf(const WatermarkKey& key) : mac_(key.secret()) {}

std::uint64_t Prf::word(std::span<const TokenId> context) const {
  if (context.empty()) throw ValidationError("empty PRF context");
  Sha256 inner = mac_.begin();
  append_u32_le(inner, static_cast<std::uint32_t>(context.size()));
  append_tokens(inner, context);
  return leading_word(mac_.finish(std::move(inner)));
}

double Prf::uniform(std::span<const TokenId> context) const { return word_to_unit(word(context)); }

Prf::PrefixStream Prf::with_prefix(std::span<const TokenId> prefix) const {
  Sha256 inner = mac_.begin();
  append_u32_le(inner, static_cast<std::uint32_t>(prefix.size() + 1));
  append_tokens(inner, prefix);
  return PrefixStream(mac_, std::move(inner));
}

std::uint64_t Prf::PrefixStream::word(TokenId last) const {
  Sha256 inner = state_;
  append_u32_le(inner, last);
  return leading_word(mac_->finish(std::move(inner)));
}

double Prf::PrefixStream::uniform(TokenId last) const { return word_to_unit(word(last)); }

double prf_uniform(const WatermarkKey& key, std::span<const TokenId> context) {
  return Prf(key).uniform(context);
}

std::size_t green_list_size(double gamma, std::size_t vocab_size) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ParameterError("gamma must lie in the open interval (0, 1)");
  }
  if (vocab_size < 2) throw ParameterError("vocab_size must be at least 2");
  return static_cast<std::size_t>(std::floor(gamma * static_cast<double>(vocab_size) + 0.5));
}

GreenList prf_partition(const Prf& prf, std::span<const TokenId> context, double gamma,
                        std::size_t vocab_size) {
  const std::size_t green = green_list_size(gamma, vocab_size);
  SplitMix64 shuffle(prf.word(context));
  std::vector<TokenId> perm(vocab_size);
  std::iota(perm.begin(), perm.end(), TokenId{0});
  std::vector<std::uint8_t> member(vocab_size, 0);
  for (std::size_t i = 0; i < green; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(shuffle.below(vocab_size - i));
    std::swap(perm[i], perm[j]);
    member[perm[i]] = 1;
  }
  return GreenList(std::move(member), green);
}

GreenList prf_partition(const WatermarkKey& key, std::span<const TokenId> context, double gamma,
                        std::size_t vocab_size) {
  return prf_partition(Prf(key), context, gamma, vocab_size);
}

}  // namespace inkmark

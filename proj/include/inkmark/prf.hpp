#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "inkmark/crypto.hpp"
#include "inkmark/tokens.hpp"
#include "json.hpp"

namespace inkmark {

enum class Scheme { RedGreen, Binary };

std::string_view to_string(Scheme scheme);
Scheme scheme_from_string(std::string_view name);

/// Secret key material identifying one provider's watermark for one scheme.
class WatermarkKey {
 public:
  static constexpr std::size_t kSecretSize = 32;
  using Secret = std::array<std::uint8_t, kSecretSize>;

  WatermarkKey(Secret secret, std::string provider_id, Scheme scheme, std::string created_at = {});

  /// Fresh secret from the operating system's CSPRNG.
  static WatermarkKey generate(std::string provider_id, Scheme scheme);
  /// Secret expanded deterministically from `seed`; for reproducible runs.
  static WatermarkKey from_seed(std::uint64_t seed, std::string provider_id, Scheme scheme,
                                std::string created_at = {});

  const Secret& secret() const noexcept { return secret_; }
  const std::string& provider_id() const noexcept { return provider_id_; }
  Scheme scheme() const noexcept { return scheme_; }
  const std::string& created_at() const noexcept { return created_at_; }
  std::string secret_hex() const;

  /// {provider_id, scheme_id, secret_hex, created_at}
  nlohmann::json to_json() const;
  /// Throws ValidationError naming the violated invariant.
  static WatermarkKey from_json(const nlohmann::json& j);

  void save(const std::filesystem::path& path) const;
  static WatermarkKey load(const std::filesystem::path& path);

  friend bool operator==(const WatermarkKey&, const WatermarkKey&) = default;

 private:
  Secret secret_;
  std::string provider_id_;
  Scheme scheme_;
  std::string created_at_;
};

/// Keyed pseudorandom function over token-id contexts.
///
/// A context is framed as its length (u32 little-endian) followed by every
/// token id (u32 little-endian) and hashed with HMAC-SHA256 under the key's
/// secret. The first 8 bytes of the MAC, read big-endian, form the 64-bit
/// word; uniform() divides it by 2^64.
class Prf {
 public:
  explicit Prf(const WatermarkKey& key);

  std::uint64_t word(std::span<const TokenId> context) const;
  double uniform(std::span<const TokenId> context) const;

  /// Evaluates contexts of the form `prefix ∥ [x]` for many x while hashing
  /// the shared prefix only once.
  class PrefixStream {
   public:
    std::uint64_t word(TokenId last) const;
    double uniform(TokenId last) const;

   private:
    friend class Prf;
    PrefixStream(const HmacSha256& mac, Sha256 state) : mac_(&mac), state_(std::move(state)) {}
    const HmacSha256* mac_;
    Sha256 state_;
  };

  /// The returned stream borrows this Prf and must not outlive it.
  PrefixStream with_prefix(std::span<const TokenId> prefix) const;

 private:
  HmacSha256 mac_;
};

/// w / 2^64 with the integer rounded to the nearest double; the handful of
/// words that round up to 2^64 map to the largest double below 1.
constexpr double word_to_unit(std::uint64_t w) noexcept {
  const double u = static_cast<double>(w) * 0x1.0p-64;
  return u < 1.0 ? u : 0x1.fffffffffffffp-1;
}

/// Throws ValidationError("empty PRF context") on an empty context.
double prf_uniform(const WatermarkKey& key, std::span<const TokenId> context);

/// Membership predicate of one green list.
class GreenList {
 public:
  GreenList(std::vector<std::uint8_t> membership, std::size_t green_count)
      : member_(std::move(membership)), green_count_(green_count) {}

  bool contains(TokenId id) const noexcept { return id < member_.size() && member_[id] != 0; }
  std::size_t green_count() const noexcept { return green_count_; }
  std::size_t vocab_size() const noexcept { return member_.size(); }

 private:
  std::vector<std::uint8_t> member_;
  std::size_t green_count_;
};

/// round-half-up(gamma * vocab_size).
std::size_t green_list_size(double gamma, std::size_t vocab_size);

/// Green list for `context`: SplitMix64 seeded with the PRF word of the
/// context drives a forward Fisher-Yates shuffle of [0, vocab_size); the
/// first green_list_size() entries are green.
GreenList prf_partition(const Prf& prf, std::span<const TokenId> context, double gamma,
                        std::size_t vocab_size);
GreenList prf_partition(const WatermarkKey& key, std::span<const TokenId> context, double gamma,
                        std::size_t vocab_size);

}  // namespace inkmark

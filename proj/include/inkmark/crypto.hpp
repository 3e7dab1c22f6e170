#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace inkmark {

using Digest256 = std::array<std::uint8_t, 32>;

/// Incremental SHA-256. Copyable: a copy continues from the same absorbed
/// state, which lets callers hash a shared prefix once.
class Sha256 {
 public:
  Sha256();
  Sha256(const Sha256& other);
  Sha256& operator=(const Sha256& other);
  Sha256(Sha256&&) noexcept;
  Sha256& operator=(Sha256&&) noexcept;
  ~Sha256();

  void update(std::span<const std::uint8_t> bytes);
  void update(std::string_view bytes);
  Digest256 finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// HMAC-SHA256 with the key schedule precomputed.
class HmacSha256 {
 public:
  explicit HmacSha256(std::span<const std::uint8_t> key);

  /// Inner hash state after the key block; absorb the message into a copy.
  Sha256 begin() const { return inner_; }
  /// Complete the MAC given an inner state that has absorbed the message.
  Digest256 finish(Sha256 inner) const;

  Digest256 mac(std::span<const std::uint8_t> message) const;

 private:
  Sha256 inner_;
  Sha256 outer_;
};

Digest256 sha256(std::string_view bytes);
std::string to_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view bytes);

/// Fill `out` from the operating system's CSPRNG.
void secure_random_bytes(std::span<std::uint8_t> out);

}  // namespace inkmark

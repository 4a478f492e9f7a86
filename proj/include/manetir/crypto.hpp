#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>

#include "manetir/bytes.hpp"
#include "manetir/node_id.hpp"
#include "manetir/rng.hpp"

namespace manetir {

inline constexpr std::size_t kDefaultKeyBytes = 16;

/// Fixed-width key bitstring. All key algebra in the protocol is XOR over this
/// type; mixing widths is an error.
class KeyMaterial {
 public:
  KeyMaterial() = default;
  explicit KeyMaterial(Bytes bytes) : bytes_(std::move(bytes)) {}

  static KeyMaterial zero(std::size_t width_bytes) { return KeyMaterial(Bytes(width_bytes, 0)); }
  static KeyMaterial random(Rng& rng, std::size_t width_bytes);
  static KeyMaterial from_hex(std::string_view hex);

  std::size_t width_bits() const { return bytes_.size() * 8; }
  std::size_t width_bytes() const { return bytes_.size(); }
  std::span<const std::uint8_t> bytes() const { return bytes_; }
  bool empty() const { return bytes_.empty(); }
  bool is_zero() const;
  std::string hex() const { return to_hex(bytes_); }

  KeyMaterial& operator^=(const KeyMaterial& other);
  friend KeyMaterial operator^(KeyMaterial a, const KeyMaterial& b) { return a ^= b; }
  friend bool operator==(const KeyMaterial&, const KeyMaterial&) = default;
  friend auto operator<=>(const KeyMaterial&, const KeyMaterial&) = default;

 private:
  Bytes bytes_;
};

/// XOR fold of a non-empty list of equal-width keys.
KeyMaterial xor_combine(std::span<const KeyMaterial> parts);

struct Nonce {
  std::uint64_t value{};
  NodeId issuer{};

  friend bool operator==(const Nonce&, const Nonce&) = default;
};

/// The "nonce + 1" reply value. Fails with NonceOverflow at 2^64 - 1.
Nonce succ(Nonce n);

/// Per-issuer nonce source. Values are random 64-bit draws; every issued value
/// is remembered so none repeats within a run.
class NonceIssuer {
 public:
  NonceIssuer() = default;
  explicit NonceIssuer(NodeId issuer) : issuer_(issuer) {}

  Nonce fresh(Rng& rng);
  bool issued(std::uint64_t value) const { return used_.contains(value); }
  std::size_t count() const { return used_.size(); }
  NodeId issuer() const { return issuer_; }
  const std::set<std::uint64_t>& used() const { return used_; }

 private:
  NodeId issuer_{};
  std::set<std::uint64_t> used_;
};

/// Convenience wrapper: one draw from `issuer`.
inline Nonce fresh_nonce(Rng& rng, NonceIssuer& issuer) { return issuer.fresh(rng); }

enum class AeadAlgorithm : std::uint8_t { AesGcm, ChaCha20Poly1305 };
enum class HashAlgorithm : std::uint8_t { Sha256, Sha3_256, Blake2s256 };

/// Scenario-level choice of primitives.
struct CipherSuite {
  AeadAlgorithm aead = AeadAlgorithm::AesGcm;
  HashAlgorithm hash = HashAlgorithm::Sha256;

  friend bool operator==(const CipherSuite&, const CipherSuite&) = default;
};

AeadAlgorithm parse_aead(std::string_view name);
HashAlgorithm parse_hash(std::string_view name);
std::string_view name_of(AeadAlgorithm a);
std::string_view name_of(HashAlgorithm h);

inline constexpr std::size_t kIvBytes = 12;
inline constexpr std::size_t kTagBytes = 16;

/// iv || ciphertext || tag
struct Ciphertext {
  Bytes bytes;
  friend bool operator==(const Ciphertext&, const Ciphertext&) = default;
};

struct Digest {
  Bytes bytes;
  friend bool operator==(const Digest&, const Digest&) = default;
};

/// Authenticated encryption with a fresh IV drawn from `iv_rng`. `aad` is
/// authenticated but not encrypted.
Ciphertext encrypt(const CipherSuite& suite, const KeyMaterial& key,
                   std::span<const std::uint8_t> plaintext, std::span<const std::uint8_t> aad,
                   Rng& iv_rng);
/// Same, with a caller-chosen IV (known-answer tests).
Ciphertext encrypt_with_iv(const CipherSuite& suite, const KeyMaterial& key,
                           std::span<const std::uint8_t> plaintext,
                           std::span<const std::uint8_t> aad, std::span<const std::uint8_t> iv);
/// Empty on a wrong key, wrong aad or any tampering.
std::optional<Bytes> try_decrypt(const CipherSuite& suite, const KeyMaterial& key,
                                 const Ciphertext& ct, std::span<const std::uint8_t> aad = {});
/// Throws Error(IntegrityFailure) on a wrong key, wrong aad or any tampering.
Bytes decrypt(const CipherSuite& suite, const KeyMaterial& key, const Ciphertext& ct,
              std::span<const std::uint8_t> aad = {});

Digest hash(const CipherSuite& suite, std::span<const std::uint8_t> data);
/// HMAC over the suite's hash.
Digest keyed_hash(const CipherSuite& suite, const KeyMaterial& key,
                  std::span<const std::uint8_t> data);
/// Constant-time comparison against keyed_hash(key, data).
bool verify_keyed_hash(const CipherSuite& suite, const KeyMaterial& key,
                       std::span<const std::uint8_t> data, const Digest& tag);
std::size_t digest_size(HashAlgorithm h);

/// First `width_bytes` bytes of hash(data), as a key.
KeyMaterial derive_key(const CipherSuite& suite, std::span<const std::uint8_t> data,
                       std::size_t width_bytes);

}  // namespace manetir

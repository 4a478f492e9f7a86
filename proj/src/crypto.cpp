#include "manetir/crypto.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <algorithm>
#include <optional>
#include <memory>

#include "manetir/error.hpp"

namespace manetir {

namespace {

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

const EVP_CIPHER* select_cipher(AeadAlgorithm aead, std::size_t key_bytes) {
  switch (aead) {
    case AeadAlgorithm::AesGcm:
      switch (key_bytes) {
        case 16: return EVP_aes_128_gcm();
        case 24: return EVP_aes_192_gcm();
        case 32: return EVP_aes_256_gcm();
        default: break;
      }
      break;
    case AeadAlgorithm::ChaCha20Poly1305:
      if (key_bytes == 32) return EVP_chacha20_poly1305();
      break;
  }
  throw Error(ErrorCode::WidthMismatch, "key width " + std::to_string(key_bytes * 8) +
                                            " bits unsupported by " +
                                            std::string(name_of(aead)));
}

const EVP_MD* select_md(HashAlgorithm h) {
  switch (h) {
    case HashAlgorithm::Sha256: return EVP_sha256();
    case HashAlgorithm::Sha3_256: return EVP_sha3_256();
    case HashAlgorithm::Blake2s256: return EVP_blake2s256();
  }
  throw Error(ErrorCode::InvalidArgument, "unknown hash algorithm");
}

int as_int(std::size_t n) {
  if (n > static_cast<std::size_t>(INT32_MAX)) {
    throw Error(ErrorCode::InvalidArgument, "buffer too large");
  }
  return static_cast<int>(n);
}

void check(int ok, const char* what) {
  if (ok != 1) throw Error(ErrorCode::InvalidArgument, std::string("openssl: ") + what);
}

}  // namespace

KeyMaterial KeyMaterial::random(Rng& rng, std::size_t width_bytes) {
  Bytes b(width_bytes);
  rng.fill(b);
  return KeyMaterial(std::move(b));
}

KeyMaterial KeyMaterial::from_hex(std::string_view hex) { return KeyMaterial(manetir::from_hex(hex)); }

bool KeyMaterial::is_zero() const {
  return std::all_of(bytes_.begin(), bytes_.end(), [](auto b) { return b == 0; });
}

KeyMaterial& KeyMaterial::operator^=(const KeyMaterial& other) {
  if (other.bytes_.size() != bytes_.size()) {
    throw Error(ErrorCode::WidthMismatch, "xor of " + std::to_string(width_bits()) + "-bit and " +
                                              std::to_string(other.width_bits()) + "-bit keys");
  }
  for (std::size_t i = 0; i < bytes_.size(); ++i) bytes_[i] ^= other.bytes_[i];
  return *this;
}

KeyMaterial xor_combine(std::span<const KeyMaterial> parts) {
  if (parts.empty()) throw Error(ErrorCode::EmptyInput, "xor_combine of an empty list");
  KeyMaterial acc = parts.front();
  for (const auto& p : parts.subspan(1)) acc ^= p;
  return acc;
}

Nonce succ(Nonce n) {
  if (n.value == UINT64_MAX) throw Error(ErrorCode::NonceOverflow, "nonce successor overflows");
  return Nonce{n.value + 1, n.issuer};
}

Nonce NonceIssuer::fresh(Rng& rng) {
  // UINT64_MAX is never issued so that succ() of an issued nonce is defined.
  constexpr int kMaxAttempts = 1 << 16;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t v = rng.next();
    if (v == UINT64_MAX || used_.contains(v)) continue;
    used_.insert(v);
    return Nonce{v, issuer_};
  }
  throw Error(ErrorCode::NonceExhausted, "node " + to_string(issuer_) + " cannot draw a fresh nonce");
}

AeadAlgorithm parse_aead(std::string_view name) {
  if (name == "aes-gcm") return AeadAlgorithm::AesGcm;
  if (name == "chacha20-poly1305") return AeadAlgorithm::ChaCha20Poly1305;
  throw Error(ErrorCode::InvalidConfig, "unknown cipher '" + std::string(name) + "'");
}

HashAlgorithm parse_hash(std::string_view name) {
  if (name == "sha256") return HashAlgorithm::Sha256;
  if (name == "sha3-256") return HashAlgorithm::Sha3_256;
  if (name == "blake2s256") return HashAlgorithm::Blake2s256;
  throw Error(ErrorCode::InvalidConfig, "unknown hash '" + std::string(name) + "'");
}

std::string_view name_of(AeadAlgorithm a) {
  switch (a) {
    case AeadAlgorithm::AesGcm: return "aes-gcm";
    case AeadAlgorithm::ChaCha20Poly1305: return "chacha20-poly1305";
  }
  return "?";
}

std::string_view name_of(HashAlgorithm h) {
  switch (h) {
    case HashAlgorithm::Sha256: return "sha256";
    case HashAlgorithm::Sha3_256: return "sha3-256";
    case HashAlgorithm::Blake2s256: return "blake2s256";
  }
  return "?";
}

Ciphertext encrypt(const CipherSuite& suite, const KeyMaterial& key,
                   std::span<const std::uint8_t> plaintext, std::span<const std::uint8_t> aad,
                   Rng& iv_rng) {
  std::uint8_t iv[kIvBytes];
  iv_rng.fill(iv);
  return encrypt_with_iv(suite, key, plaintext, aad, iv);
}

Ciphertext encrypt_with_iv(const CipherSuite& suite, const KeyMaterial& key,
                           std::span<const std::uint8_t> plaintext,
                           std::span<const std::uint8_t> aad, std::span<const std::uint8_t> iv) {
  if (iv.size() != kIvBytes) throw Error(ErrorCode::InvalidArgument, "IV must be 12 bytes");
  const EVP_CIPHER* cipher = select_cipher(suite.aead, key.width_bytes());
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw Error(ErrorCode::InvalidArgument, "openssl: cipher context allocation");

  check(EVP_EncryptInit_ex(ctx.get(), cipher, nullptr, nullptr, nullptr), "encrypt init");
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_IVLEN, kIvBytes, nullptr), "iv length");
  check(EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.bytes().data(), iv.data()), "key/iv");

  int len = 0;
  if (!aad.empty()) {
    check(EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), as_int(aad.size())), "aad");
  }
  Bytes out(kIvBytes + plaintext.size() + kTagBytes);
  std::copy(iv.begin(), iv.end(), out.begin());
  std::uint8_t* body = out.data() + kIvBytes;
  int written = 0;
  if (!plaintext.empty()) {
    check(EVP_EncryptUpdate(ctx.get(), body, &len, plaintext.data(), as_int(plaintext.size())),
          "encrypt");
    written = len;
  }
  check(EVP_EncryptFinal_ex(ctx.get(), body + written, &len), "encrypt final");
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_GET_TAG, kTagBytes,
                            out.data() + kIvBytes + plaintext.size()),
        "get tag");
  return Ciphertext{std::move(out)};
}

std::optional<Bytes> try_decrypt(const CipherSuite& suite, const KeyMaterial& key,
                                 const Ciphertext& ct, std::span<const std::uint8_t> aad) {
  const EVP_CIPHER* cipher = select_cipher(suite.aead, key.width_bytes());
  if (ct.bytes.size() < kIvBytes + kTagBytes) return std::nullopt;
  const std::size_t body_len = ct.bytes.size() - kIvBytes - kTagBytes;
  const std::uint8_t* iv = ct.bytes.data();
  const std::uint8_t* body = iv + kIvBytes;
  std::uint8_t tag[kTagBytes];
  std::copy(body + body_len, body + body_len + kTagBytes, tag);

  // One context per thread, re-initialised per call: brute-force callers try
  // many keys and the allocation would dominate.
  thread_local CipherCtx ctx(EVP_CIPHER_CTX_new());
  thread_local const EVP_CIPHER* ctx_cipher = nullptr;
  if (!ctx) throw Error(ErrorCode::InvalidArgument, "openssl: cipher context allocation");
  if (cipher != ctx_cipher) {
    check(EVP_DecryptInit_ex(ctx.get(), cipher, nullptr, nullptr, nullptr), "decrypt init");
    check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_IVLEN, kIvBytes, nullptr), "iv length");
    ctx_cipher = cipher;
  }
  check(EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.bytes().data(), iv), "key/iv");

  int len = 0;
  if (!aad.empty()) {
    check(EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), as_int(aad.size())), "aad");
  }
  Bytes out(body_len);
  int written = 0;
  if (body_len > 0) {
    check(EVP_DecryptUpdate(ctx.get(), out.data(), &len, body, as_int(body_len)), "decrypt");
    written = len;
  }
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_TAG, kTagBytes, tag), "set tag");
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + written, &len) != 1) return std::nullopt;
  return out;
}

Bytes decrypt(const CipherSuite& suite, const KeyMaterial& key, const Ciphertext& ct,
              std::span<const std::uint8_t> aad) {
  auto out = try_decrypt(suite, key, ct, aad);
  if (!out) throw Error(ErrorCode::IntegrityFailure, "authentication tag mismatch");
  return std::move(*out);
}

std::size_t digest_size(HashAlgorithm h) {
  return static_cast<std::size_t>(EVP_MD_get_size(select_md(h)));
}

Digest hash(const CipherSuite& suite, std::span<const std::uint8_t> data) {
  Digest d;
  d.bytes.resize(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  check(EVP_Digest(data.data(), data.size(), d.bytes.data(), &len, select_md(suite.hash), nullptr),
        "digest");
  d.bytes.resize(len);
  return d;
}

Digest keyed_hash(const CipherSuite& suite, const KeyMaterial& key,
                  std::span<const std::uint8_t> data) {
  Digest d;
  d.bytes.resize(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  static const std::uint8_t kEmpty = 0;
  const std::uint8_t* msg = data.empty() ? &kEmpty : data.data();
  if (HMAC(select_md(suite.hash), key.bytes().data(), as_int(key.width_bytes()), msg, data.size(),
           d.bytes.data(), &len) == nullptr) {
    throw Error(ErrorCode::InvalidArgument, "openssl: hmac");
  }
  d.bytes.resize(len);
  return d;
}

bool verify_keyed_hash(const CipherSuite& suite, const KeyMaterial& key,
                       std::span<const std::uint8_t> data, const Digest& tag) {
  const Digest expected = keyed_hash(suite, key, data);
  if (expected.bytes.size() != tag.bytes.size()) return false;
  return CRYPTO_memcmp(expected.bytes.data(), tag.bytes.data(), tag.bytes.size()) == 0;
}

KeyMaterial derive_key(const CipherSuite& suite, std::span<const std::uint8_t> data,
                       std::size_t width_bytes) {
  Digest d = hash(suite, data);
  if (d.bytes.size() < width_bytes) {
    throw Error(ErrorCode::WidthMismatch, "digest shorter than requested key width");
  }
  d.bytes.resize(width_bytes);
  return KeyMaterial(std::move(d.bytes));
}

}  // namespace manetir

#include <doctest.h>

#include <algorithm>
#include <unordered_set>

#include "manetir/crypto.hpp"
#include "manetir/error.hpp"

using namespace manetir;

namespace {

Bytes text(std::string_view s) { return Bytes(s.begin(), s.end()); }

KeyMaterial counting_key(std::size_t n) {
  Bytes b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(i);
  return KeyMaterial(b);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("xor_combine identities") {
  Rng rng(7);
  const auto x = KeyMaterial::random(rng, 16);
  CHECK(xor_combine(std::vector{x}) == x);
  CHECK(xor_combine(std::vector{x, x}).is_zero());
  CHECK((x ^ x) == KeyMaterial::zero(16));
}

TEST_CASE("xor_combine is order independent over 17 values") {
  Rng rng(11);
  std::vector<KeyMaterial> parts;
  for (int i = 0; i < 17; ++i) parts.push_back(KeyMaterial::random(rng, 16));
  const auto reference = xor_combine(parts);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (std::size_t j = i + 1; j < parts.size(); ++j) {
      auto swapped = parts;
      std::swap(swapped[i], swapped[j]);
      CHECK(xor_combine(swapped) == reference);
    }
  }
}

TEST_CASE("xor_combine errors") {
  CHECK(code_of([] { xor_combine(std::vector<KeyMaterial>{}); }) == ErrorCode::EmptyInput);
  CHECK(code_of([] { xor_combine(std::vector{KeyMaterial::zero(16), KeyMaterial::zero(32)}); }) ==
        ErrorCode::WidthMismatch);
}

TEST_CASE("xor algebra properties on random lists") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<KeyMaterial> parts;
    for (std::size_t i = 0; i < n; ++i) parts.push_back(KeyMaterial::random(rng, 16));
    const auto all = xor_combine(parts);
    const std::size_t cut = rng.below(n);
    std::vector<KeyMaterial> left(parts.begin(), parts.begin() + static_cast<long>(cut));
    std::vector<KeyMaterial> right(parts.begin() + static_cast<long>(cut), parts.end());
    const auto r = xor_combine(right);
    CHECK((left.empty() ? r : xor_combine(left) ^ r) == all);
    CHECK((all ^ parts[0] ^ parts[0]) == all);
  }
}

TEST_CASE("aead round trip and wrong key rejection") {
  Rng rng(5);
  for (auto aead : {AeadAlgorithm::AesGcm, AeadAlgorithm::ChaCha20Poly1305}) {
    const CipherSuite suite{aead, HashAlgorithm::Sha256};
    const std::size_t width = aead == AeadAlgorithm::AesGcm ? 16 : 32;
    for (int trial = 0; trial < 50; ++trial) {
      const auto k = KeyMaterial::random(rng, width);
      Bytes m(rng.below(200));
      rng.fill(m);
      const auto ct = encrypt(suite, k, m, {}, rng);
      CHECK(decrypt(suite, k, ct) == m);
      auto other = KeyMaterial::random(rng, width);
      CHECK(code_of([&] { decrypt(suite, other, ct); }) == ErrorCode::IntegrityFailure);
    }
  }
}

TEST_CASE("identical plaintexts encrypt differently") {
  Rng rng(9);
  const CipherSuite suite;
  const auto k = KeyMaterial::random(rng, 16);
  const auto m = text("same plaintext");
  CHECK(encrypt(suite, k, m, {}, rng) != encrypt(suite, k, m, {}, rng));
}

TEST_CASE("aead known answers") {
  const Bytes iv = from_hex("000102030405060708090a0b");
  const Bytes aad = from_hex("0100000001000000020000");
  const Bytes pt = text("manet group key");
  SUBCASE("aes-128-gcm") {
    const auto ct = encrypt_with_iv({}, counting_key(16), pt, aad, iv);
    CHECK(to_hex(ct.bytes) ==
          "000102030405060708090a0bfe0dc9ab123b902624a711aa5dc609fed4e6bba9e144339418442ad16b70a1");
  }
  SUBCASE("aes-256-gcm") {
    const auto ct = encrypt_with_iv({}, counting_key(32), pt, aad, iv);
    CHECK(to_hex(ct.bytes) ==
          "000102030405060708090a0b2a63b87eb1c5a569e234e7abda8c01f86a010e850978832044968c4a359928");
  }
  SUBCASE("chacha20-poly1305") {
    const CipherSuite suite{AeadAlgorithm::ChaCha20Poly1305, HashAlgorithm::Sha256};
    const auto ct = encrypt_with_iv(suite, counting_key(32), pt, aad, iv);
    CHECK(to_hex(ct.bytes) ==
          "000102030405060708090a0be49a66655d37c232d8f64fd3f378779fd5d583152e421ba54c30f087126325");
    CHECK(code_of([&] { encrypt_with_iv(suite, counting_key(16), pt, aad, iv); }) ==
          ErrorCode::WidthMismatch);
  }
}

TEST_CASE("any single bit flip is rejected") {
  Rng rng(13);
  const CipherSuite suite;
  const auto k = KeyMaterial::random(rng, 16);
  const Bytes aad = text("hdr");
  const auto ct = encrypt(suite, k, text("payload under test"), aad, rng);
  for (std::size_t bit = 0; bit < ct.bytes.size() * 8; ++bit) {
    auto bad = ct;
    bad.bytes[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    CHECK(code_of([&] { decrypt(suite, k, bad, aad); }) == ErrorCode::IntegrityFailure);
  }
  auto other_aad = aad;
  other_aad[0] ^= 1;
  CHECK(code_of([&] { decrypt(suite, k, ct, other_aad); }) == ErrorCode::IntegrityFailure);
}

TEST_CASE("hash known answers") {
  const auto abc = text("abc");
  CHECK(to_hex(hash({AeadAlgorithm::AesGcm, HashAlgorithm::Sha256}, abc).bytes) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(to_hex(hash({AeadAlgorithm::AesGcm, HashAlgorithm::Sha256}, {}).bytes) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(to_hex(hash({AeadAlgorithm::AesGcm, HashAlgorithm::Sha3_256}, abc).bytes) ==
        "3a985da74fe225b2045c172d6bd390bd855f086e3e9d525b46bfe24511431532");
  CHECK(to_hex(hash({AeadAlgorithm::AesGcm, HashAlgorithm::Blake2s256}, abc).bytes) ==
        "508c5e8c327c14e2e1a72ba34eeb452f37458b209ed63a294d999b4c86675982");
  CHECK(hash({}, abc) == hash({}, abc));
}

TEST_CASE("keyed hash known answers and forgery resistance") {
  CHECK(to_hex(keyed_hash({}, counting_key(16), text("abc")).bytes) ==
        "d601cc177559b0248459787f7e804ed7f27689b5995c59b661802d9682fdf8d2");
  CHECK(to_hex(keyed_hash({AeadAlgorithm::AesGcm, HashAlgorithm::Blake2s256}, counting_key(16),
                          text("abc"))
                   .bytes) == "b18e74aeff4dc27582df877e62377bb81375eb5d8b7b173d25149eecccc7c68a");

  Rng rng(17);
  const CipherSuite suite;
  int collisions = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto k = KeyMaterial::random(rng, 16);
    auto k2 = KeyMaterial::random(rng, 16);
    Bytes d(1 + rng.below(64));
    rng.fill(d);
    const auto tag = keyed_hash(suite, k, d);
    CHECK(verify_keyed_hash(suite, k, d, tag));
    if (keyed_hash(suite, k2, d) == tag) ++collisions;
    CHECK_FALSE(verify_keyed_hash(suite, k2, d, tag));
    auto d2 = d;
    d2[rng.below(d2.size())] ^= 0x01;
    CHECK_FALSE(verify_keyed_hash(suite, k, d2, tag));
  }
  CHECK(collisions == 0);
}

TEST_CASE("nonces") {
  Rng rng(1);
  NonceIssuer issuer(NodeId{4});
  const auto a = issuer.fresh(rng);
  const auto b = issuer.fresh(rng);
  CHECK(a.value != b.value);
  CHECK(a.issuer == NodeId{4});

  Rng r1(99), r2(99);
  NonceIssuer i1(NodeId{1}), i2(NodeId{1});
  for (int i = 0; i < 10; ++i) CHECK(i1.fresh(r1) == i2.fresh(r2));

  Rng big(123);
  NonceIssuer many(NodeId{2});
  std::unordered_set<std::uint64_t> seen;
  int duplicates = 0;
  for (int i = 0; i < 100000; ++i) duplicates += seen.insert(many.fresh(big).value).second ? 0 : 1;
  CHECK(duplicates == 0);

  CHECK(succ(Nonce{41, NodeId{1}}).value == 42);
  CHECK(code_of([] { succ(Nonce{UINT64_MAX, NodeId{1}}); }) == ErrorCode::NonceOverflow);
}

TEST_CASE("suite names parse") {
  CHECK(parse_aead("chacha20-poly1305") == AeadAlgorithm::ChaCha20Poly1305);
  CHECK(parse_hash("blake2s256") == HashAlgorithm::Blake2s256);
  CHECK(name_of(parse_hash("sha3-256")) == "sha3-256");
  CHECK(code_of([] { parse_aead("rot13"); }) == ErrorCode::InvalidConfig);
}

#pragma once

// Per-service RSA keys, message signatures, hybrid message encryption and
// the textual X.509v1-style certificate handed out to consumers.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mobilehost {

using Bytes = std::vector<std::uint8_t>;

Bytes to_bytes(std::string_view s);
std::string to_hex(std::span<const std::uint8_t> data);
Bytes from_hex(std::string_view hex);  // throws Error(InvalidArgument)
std::string base64_encode(std::span<const std::uint8_t> data);
Bytes base64_decode(std::string_view text);  // strict; throws Error(InvalidArgument)
Bytes random_bytes(std::size_t n);
Bytes sha256(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view data);
// PBKDF2-HMAC-SHA256, 32-byte output.
Bytes derive_key(std::string_view secret, std::span<const std::uint8_t> salt, int iterations);
bool constant_time_equal(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

inline constexpr std::uint32_t kDefaultPublicExponent = 65537;
inline constexpr int kDefaultKeyBits = 2048;

struct PublicKey {
  Bytes modulus;   // big-endian, no leading zeros
  Bytes exponent;  // big-endian, no leading zeros

  int bits() const;
  std::string modulus_decimal() const;
  std::string exponent_decimal() const;

  friend bool operator==(const PublicKey&, const PublicKey&) = default;
};

struct EvpKey;  // wraps EVP_PKEY

class KeyPair {
 public:
  const PublicKey& public_key() const { return public_; }
  int bits() const { return public_.bits(); }

  std::string private_pem() const;
  static KeyPair from_private_pem(std::string_view pem);

  const EvpKey& evp() const { return *key_; }

 private:
  friend KeyPair generate_keypair(int bits);
  explicit KeyPair(std::shared_ptr<const EvpKey> key);

  std::shared_ptr<const EvpKey> key_;
  PublicKey public_;
};

// bits must be 2048, 3072 or 4096; anything else throws Error(InvalidArgument).
KeyPair generate_keypair(int bits = kDefaultKeyBits);

struct SignatureBlock {
  std::string algorithm;
  std::string digest_algorithm;
  std::string value;  // base64

  friend bool operator==(const SignatureBlock&, const SignatureBlock&) = default;
};

inline constexpr std::string_view kSignatureAlgorithm = "http://www.w3.org/2001/04/xmldsig-more#rsa-sha256";
inline constexpr std::string_view kDigestAlgorithm = "http://www.w3.org/2001/04/xmlenc#sha256";

SignatureBlock sign_message(std::string_view message, const KeyPair& key);
// Throws Error(MalformedSignature) when the value is not valid base64.
bool verify_signature(std::string_view message, const SignatureBlock& sig, const PublicKey& key);

// AES-256-GCM payload under a fresh session key, the key wrapped with
// RSA-OAEP(SHA-256) for the recipient. The ciphertext carries the GCM tag.
struct CipherEnvelope {
  std::string wrapped_key;  // base64
  std::string iv;           // base64
  std::string ciphertext;   // base64

  friend bool operator==(const CipherEnvelope&, const CipherEnvelope&) = default;
};

CipherEnvelope encrypt_message(std::string_view plaintext, const PublicKey& recipient);
// Throws Error(DecryptFailure) with the same message for every cause.
std::string decrypt_message(const CipherEnvelope& env, const KeyPair& key);

using CertTime = std::chrono::sys_seconds;

struct Certificate {
  std::string version_label = "X.509v1";
  Bytes serial;
  std::string subject_dn;
  std::string issuer_dn;
  CertTime not_before{};
  CertTime not_after{};
  PublicKey public_key;
  std::string signature_algorithm = "RSA";
  Bytes signature;

  friend bool operator==(const Certificate&, const Certificate&) = default;
};

inline constexpr int kDefaultValidityDays = 10;

// Self-signed; serial is the ASCII digits of a clock-derived token.
Certificate issue_certificate(const KeyPair& key, std::string subject_dn, int validity_days = kDefaultValidityDays,
                              std::optional<CertTime> not_before = std::nullopt);
std::string render_certificate_text(const Certificate& cert);
// Throws Error(InvalidArgument) on any deviation from the rendered layout.
Certificate parse_certificate_text(std::string_view text);
// Checks the self-signature and the validity ordering.
bool verify_certificate(const Certificate& cert);

// "Wed Aug 13 17:37:58 UTC 2008"
std::string format_cert_time(CertTime t);
CertTime parse_cert_time(std::string_view s);

// keys/<service>.key (PEM, owner read/write only) and keys/<service>.cert.
class KeyStore {
 public:
  explicit KeyStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  bool exists(std::string_view service) const;
  // Refuses to replace existing files unless overwrite is set (IoFailure).
  void save(std::string_view service, const KeyPair& key, const Certificate& cert, bool overwrite = false) const;
  std::pair<KeyPair, Certificate> load(std::string_view service) const;
  Certificate load_certificate(std::string_view service) const;
  std::filesystem::path key_path(std::string_view service) const;
  std::filesystem::path cert_path(std::string_view service) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace mobilehost

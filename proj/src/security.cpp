#include "mobilehost/security.hpp"

#include <openssl/bn.h>
#include <openssl/core_names.h>
#include <openssl/crypto.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/param_build.h>
#include <openssl/pem.h>
#include <openssl/rand.h>

#include <array>
#include <atomic>
#include <ctime>
#include <fstream>
#include <sstream>

#include "mobilehost/error.hpp"

namespace mobilehost {

struct EvpKey {
  EVP_PKEY* pkey = nullptr;
  explicit EvpKey(EVP_PKEY* k) : pkey(k) {}
  EvpKey(const EvpKey&) = delete;
  EvpKey& operator=(const EvpKey&) = delete;
  ~EvpKey() { EVP_PKEY_free(pkey); }
};

namespace {

constexpr std::size_t kSessionKeyBytes = 32;
constexpr std::size_t kIvBytes = 12;
constexpr std::size_t kTagBytes = 16;
constexpr std::size_t kDigitsPerLine = 43;
constexpr std::string_view kBeginBanner = "----- Begin Certificate -----";
constexpr std::string_view kEndBanner = "----- End Certificate -----";

template <auto Fn>
struct Deleter {
  template <typename T>
  void operator()(T* p) const {
    Fn(p);
  }
};
using BnPtr = std::unique_ptr<BIGNUM, Deleter<BN_free>>;
using CtxPtr = std::unique_ptr<EVP_PKEY_CTX, Deleter<EVP_PKEY_CTX_free>>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, Deleter<EVP_MD_CTX_free>>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, Deleter<EVP_CIPHER_CTX_free>>;
using BioPtr = std::unique_ptr<BIO, Deleter<BIO_free_all>>;
using ParamBldPtr = std::unique_ptr<OSSL_PARAM_BLD, Deleter<OSSL_PARAM_BLD_free>>;
using ParamPtr = std::unique_ptr<OSSL_PARAM, Deleter<OSSL_PARAM_free>>;

[[noreturn]] void crypto_failure(std::string_view what) {
  unsigned long err = ERR_get_error();
  std::string detail;
  if (err != 0) {
    char buf[256];
    ERR_error_string_n(err, buf, sizeof buf);
    detail = std::string(": ") + buf;
  }
  ERR_clear_error();
  throw Error(Errc::CryptoFailure, std::string(what) + detail);
}

Bytes bn_to_bytes(const BIGNUM* bn) {
  Bytes out(static_cast<std::size_t>(BN_num_bytes(bn)));
  BN_bn2bin(bn, out.data());
  return out;
}

BnPtr bytes_to_bn(std::span<const std::uint8_t> b) {
  BnPtr bn(BN_bin2bn(b.data(), static_cast<int>(b.size()), nullptr));
  if (!bn) crypto_failure("BN_bin2bn");
  return bn;
}

std::string bytes_to_decimal(std::span<const std::uint8_t> b) {
  BnPtr bn = bytes_to_bn(b);
  char* dec = BN_bn2dec(bn.get());
  if (!dec) crypto_failure("BN_bn2dec");
  std::string out(dec);
  OPENSSL_free(dec);
  return out;
}

Bytes decimal_to_bytes(std::string_view digits) {
  if (digits.empty() || digits.find_first_not_of("0123456789") != std::string_view::npos) {
    throw Error(Errc::InvalidArgument, "expected decimal digits");
  }
  BIGNUM* raw = nullptr;
  std::string s(digits);
  if (BN_dec2bn(&raw, s.c_str()) == 0) crypto_failure("BN_dec2bn");
  BnPtr bn(raw);
  return bn_to_bytes(bn.get());
}

PublicKey extract_public(const EVP_PKEY* pkey) {
  BIGNUM* n = nullptr;
  BIGNUM* e = nullptr;
  if (EVP_PKEY_get_bn_param(pkey, OSSL_PKEY_PARAM_RSA_N, &n) != 1 ||
      EVP_PKEY_get_bn_param(pkey, OSSL_PKEY_PARAM_RSA_E, &e) != 1) {
    BN_free(n);
    crypto_failure("reading RSA public parameters");
  }
  BnPtr np(n), ep(e);
  return PublicKey{bn_to_bytes(n), bn_to_bytes(e)};
}

std::unique_ptr<EvpKey> public_evp(const PublicKey& key) {
  BnPtr n = bytes_to_bn(key.modulus);
  BnPtr e = bytes_to_bn(key.exponent);
  ParamBldPtr bld(OSSL_PARAM_BLD_new());
  if (!bld || OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_N, n.get()) != 1 ||
      OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_E, e.get()) != 1) {
    crypto_failure("building RSA parameters");
  }
  ParamPtr params(OSSL_PARAM_BLD_to_param(bld.get()));
  CtxPtr ctx(EVP_PKEY_CTX_new_from_name(nullptr, "RSA", nullptr));
  EVP_PKEY* pkey = nullptr;
  if (!params || !ctx || EVP_PKEY_fromdata_init(ctx.get()) != 1 ||
      EVP_PKEY_fromdata(ctx.get(), &pkey, EVP_PKEY_PUBLIC_KEY, params.get()) != 1) {
    crypto_failure("importing RSA public key");
  }
  return std::make_unique<EvpKey>(pkey);
}

Bytes rsa_sign(std::span<const std::uint8_t> message, EVP_PKEY* pkey) {
  MdCtxPtr ctx(EVP_MD_CTX_new());
  std::size_t len = 0;
  if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, EVP_sha256(), nullptr, pkey) != 1 ||
      EVP_DigestSign(ctx.get(), nullptr, &len, message.data(), message.size()) != 1) {
    crypto_failure("signing");
  }
  Bytes sig(len);
  if (EVP_DigestSign(ctx.get(), sig.data(), &len, message.data(), message.size()) != 1) crypto_failure("signing");
  sig.resize(len);
  return sig;
}

bool rsa_verify(std::span<const std::uint8_t> message, std::span<const std::uint8_t> sig, EVP_PKEY* pkey) {
  MdCtxPtr ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, EVP_sha256(), nullptr, pkey) != 1) {
    crypto_failure("verify init");
  }
  int rc = EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), message.data(), message.size());
  ERR_clear_error();
  return rc == 1;
}

std::span<const std::uint8_t> as_span(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

std::string wrap_digits(const std::string& digits) {
  std::string out;
  for (std::size_t i = 0; i < digits.size(); i += kDigitsPerLine) {
    out += digits.substr(i, kDigitsPerLine);
    out += '\n';
  }
  return out;
}

std::string serial_text(std::span<const std::uint8_t> serial) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < serial.size(); ++i) {
    if (i) out += ':';
    out += kHex[serial[i] >> 4];
    out += kHex[serial[i] & 0xF];
  }
  return out;
}

// Everything from "Type:" through the public exponent; this is what the
// self-signature covers.
std::string tbs_text(const Certificate& c) {
  std::string out;
  out += "Type: " + c.version_label + "\n";
  out += "Serial number: " + serial_text(c.serial) + "\n";
  out += "SubjectDN: " + c.subject_dn + "\n";
  out += "IssuerDN: " + c.issuer_dn + "\n";
  out += "Start Date: " + format_cert_time(c.not_before) + "\n";
  out += "Final Date: " + format_cert_time(c.not_after) + "\n";
  out += "Public Key: RSA\n";
  out += "modulus:\n";
  out += wrap_digits(c.public_key.modulus_decimal());
  out += "public exponent:" + c.public_key.exponent_decimal() + "\n";
  return out;
}

constexpr std::array<std::string_view, 7> kDays = {"Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat"};
constexpr std::array<std::string_view, 12> kMonths = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                      "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};

std::string two_digits(int v) {
  std::string s = std::to_string(v);
  return s.size() < 2 ? "0" + s : s;
}

Bytes next_serial() {
  static std::atomic<std::uint64_t> last{0};
  auto now = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
          .count());
  std::uint64_t token = now % 1000000;
  std::uint64_t prev = last.load();
  // Keep serials distinct within a process even inside one millisecond.
  while (true) {
    std::uint64_t candidate = token == prev % 1000000 ? (prev + 1) % 1000000 : token;
    if (last.compare_exchange_weak(prev, candidate)) {
      token = candidate;
      break;
    }
  }
  std::string digits = std::to_string(token);
  digits.insert(0, 6 - digits.size(), '0');
  return to_bytes(digits);
}

}  // namespace

Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

std::string to_hex(std::span<const std::uint8_t> data) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out += kHex[b >> 4];
    out += kHex[b & 0xF];
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2) throw Error(Errc::InvalidArgument, "odd-length hex string");
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = nibble(hex[i]);
    int lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) throw Error(Errc::InvalidArgument, "invalid hex digit");
    out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
  }
  return out;
}

std::string base64_encode(std::span<const std::uint8_t> data) {
  std::string out(4 * ((data.size() + 2) / 3), '\0');
  int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data.data(), static_cast<int>(data.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

Bytes base64_decode(std::string_view text) {
  auto valid = [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '+' || c == '/';
  };
  if (text.size() % 4 != 0) throw Error(Errc::InvalidArgument, "base64 length is not a multiple of 4");
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  for (std::size_t i = 0; i < text.size() - padding; ++i) {
    if (!valid(text[i])) throw Error(Errc::InvalidArgument, "invalid base64 character");
  }
  Bytes out(3 * text.size() / 4);
  int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) throw Error(Errc::InvalidArgument, "invalid base64");
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

Bytes random_bytes(std::size_t n) {
  Bytes out(n);
  if (n && RAND_bytes(out.data(), static_cast<int>(n)) != 1) crypto_failure("RAND_bytes");
  return out;
}

Bytes sha256(std::span<const std::uint8_t> data) {
  Bytes out(32);
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1) crypto_failure("sha256");
  return out;
}

std::string sha256_hex(std::string_view data) { return to_hex(sha256(as_span(data))); }

Bytes derive_key(std::string_view secret, std::span<const std::uint8_t> salt, int iterations) {
  Bytes out(32);
  if (PKCS5_PBKDF2_HMAC(secret.data(), static_cast<int>(secret.size()), salt.data(), static_cast<int>(salt.size()),
                        iterations, EVP_sha256(), static_cast<int>(out.size()), out.data()) != 1) {
    crypto_failure("PBKDF2");
  }
  return out;
}

bool constant_time_equal(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  return a.size() == b.size() && CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

int PublicKey::bits() const {
  if (modulus.empty()) return 0;
  int lead = 0;
  for (std::uint8_t top = modulus.front(); top; top >>= 1) ++lead;
  return static_cast<int>(modulus.size() - 1) * 8 + lead;
}

std::string PublicKey::modulus_decimal() const { return bytes_to_decimal(modulus); }
std::string PublicKey::exponent_decimal() const { return bytes_to_decimal(exponent); }

KeyPair::KeyPair(std::shared_ptr<const EvpKey> key) : key_(std::move(key)), public_(extract_public(key_->pkey)) {}

std::string KeyPair::private_pem() const {
  BioPtr bio(BIO_new(BIO_s_mem()));
  if (!bio || PEM_write_bio_PrivateKey(bio.get(), key_->pkey, nullptr, nullptr, 0, nullptr, nullptr) != 1) {
    crypto_failure("writing private key");
  }
  char* data = nullptr;
  long len = BIO_get_mem_data(bio.get(), &data);
  return std::string(data, static_cast<std::size_t>(len));
}

KeyPair KeyPair::from_private_pem(std::string_view pem) {
  BioPtr bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
  EVP_PKEY* pkey = bio ? PEM_read_bio_PrivateKey(bio.get(), nullptr, nullptr, nullptr) : nullptr;
  if (!pkey) crypto_failure("reading private key");
  if (EVP_PKEY_get_base_id(pkey) != EVP_PKEY_RSA) {
    EVP_PKEY_free(pkey);
    throw Error(Errc::CryptoFailure, "private key is not RSA");
  }
  return KeyPair(std::make_shared<const EvpKey>(pkey));
}

KeyPair generate_keypair(int bits) {
  if (bits != 2048 && bits != 3072 && bits != 4096) {
    throw Error(Errc::InvalidArgument, "key size must be 2048, 3072 or 4096 bits, got " + std::to_string(bits));
  }
  CtxPtr ctx(EVP_PKEY_CTX_new_from_name(nullptr, "RSA", nullptr));
  EVP_PKEY* pkey = nullptr;
  if (!ctx || EVP_PKEY_keygen_init(ctx.get()) != 1 ||
      EVP_PKEY_CTX_set_rsa_keygen_bits(ctx.get(), bits) != 1 || EVP_PKEY_generate(ctx.get(), &pkey) != 1) {
    crypto_failure("RSA key generation");
  }
  return KeyPair(std::make_shared<const EvpKey>(pkey));
}

SignatureBlock sign_message(std::string_view message, const KeyPair& key) {
  Bytes sig = rsa_sign(as_span(message), key.evp().pkey);
  return SignatureBlock{std::string(kSignatureAlgorithm), std::string(kDigestAlgorithm), base64_encode(sig)};
}

bool verify_signature(std::string_view message, const SignatureBlock& sig, const PublicKey& key) {
  Bytes raw;
  try {
    raw = base64_decode(sig.value);
  } catch (const Error&) {
    throw Error(Errc::MalformedSignature, "signature value is not valid base64");
  }
  if (sig.algorithm != kSignatureAlgorithm || sig.digest_algorithm != kDigestAlgorithm) return false;
  if (raw.size() != (static_cast<std::size_t>(key.bits()) + 7) / 8) return false;
  auto pub = public_evp(key);
  return rsa_verify(as_span(message), raw, pub->pkey);
}

CipherEnvelope encrypt_message(std::string_view plaintext, const PublicKey& recipient) {
  if (plaintext.empty()) throw Error(Errc::InvalidArgument, "plaintext must not be empty");
  Bytes session = random_bytes(kSessionKeyBytes);
  Bytes iv = random_bytes(kIvBytes);

  CipherCtxPtr cctx(EVP_CIPHER_CTX_new());
  Bytes ct(plaintext.size() + kTagBytes);
  int len = 0;
  int total = 0;
  if (!cctx || EVP_EncryptInit_ex(cctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1 ||
      EVP_CIPHER_CTX_ctrl(cctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(kIvBytes), nullptr) != 1 ||
      EVP_EncryptInit_ex(cctx.get(), nullptr, nullptr, session.data(), iv.data()) != 1 ||
      EVP_EncryptUpdate(cctx.get(), ct.data(), &len, reinterpret_cast<const unsigned char*>(plaintext.data()),
                        static_cast<int>(plaintext.size())) != 1) {
    crypto_failure("AES-GCM encryption");
  }
  total = len;
  if (EVP_EncryptFinal_ex(cctx.get(), ct.data() + total, &len) != 1) crypto_failure("AES-GCM encryption");
  total += len;
  if (EVP_CIPHER_CTX_ctrl(cctx.get(), EVP_CTRL_GCM_GET_TAG, static_cast<int>(kTagBytes), ct.data() + total) != 1) {
    crypto_failure("AES-GCM tag");
  }
  ct.resize(static_cast<std::size_t>(total) + kTagBytes);

  auto pub = public_evp(recipient);
  CtxPtr kctx(EVP_PKEY_CTX_new(pub->pkey, nullptr));
  std::size_t wlen = 0;
  if (!kctx || EVP_PKEY_encrypt_init(kctx.get()) != 1 ||
      EVP_PKEY_CTX_set_rsa_padding(kctx.get(), RSA_PKCS1_OAEP_PADDING) != 1 ||
      EVP_PKEY_CTX_set_rsa_oaep_md(kctx.get(), EVP_sha256()) != 1 ||
      EVP_PKEY_encrypt(kctx.get(), nullptr, &wlen, session.data(), session.size()) != 1) {
    crypto_failure("wrapping session key");
  }
  Bytes wrapped(wlen);
  if (EVP_PKEY_encrypt(kctx.get(), wrapped.data(), &wlen, session.data(), session.size()) != 1) {
    crypto_failure("wrapping session key");
  }
  wrapped.resize(wlen);
  OPENSSL_cleanse(session.data(), session.size());
  return CipherEnvelope{base64_encode(wrapped), base64_encode(iv), base64_encode(ct)};
}

std::string decrypt_message(const CipherEnvelope& env, const KeyPair& key) {
  auto fail = [] {
    ERR_clear_error();
    return Error(Errc::DecryptFailure, "message could not be decrypted");
  };
  Bytes wrapped, iv, ct;
  try {
    wrapped = base64_decode(env.wrapped_key);
    iv = base64_decode(env.iv);
    ct = base64_decode(env.ciphertext);
  } catch (const Error&) {
    throw fail();
  }
  if (iv.size() != kIvBytes || ct.size() < kTagBytes) throw fail();

  CtxPtr kctx(EVP_PKEY_CTX_new(key.evp().pkey, nullptr));
  Bytes session(512);
  std::size_t slen = session.size();
  if (!kctx || EVP_PKEY_decrypt_init(kctx.get()) != 1 ||
      EVP_PKEY_CTX_set_rsa_padding(kctx.get(), RSA_PKCS1_OAEP_PADDING) != 1 ||
      EVP_PKEY_CTX_set_rsa_oaep_md(kctx.get(), EVP_sha256()) != 1 ||
      EVP_PKEY_decrypt(kctx.get(), session.data(), &slen, wrapped.data(), wrapped.size()) != 1 ||
      slen != kSessionKeyBytes) {
    throw fail();
  }

  std::size_t body = ct.size() - kTagBytes;
  std::string plain(body, '\0');
  CipherCtxPtr cctx(EVP_CIPHER_CTX_new());
  int len = 0;
  int total = 0;
  bool ok = cctx && EVP_DecryptInit_ex(cctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) == 1 &&
            EVP_CIPHER_CTX_ctrl(cctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(kIvBytes), nullptr) == 1 &&
            EVP_DecryptInit_ex(cctx.get(), nullptr, nullptr, session.data(), iv.data()) == 1 &&
            EVP_DecryptUpdate(cctx.get(), reinterpret_cast<unsigned char*>(plain.data()), &len, ct.data(),
                              static_cast<int>(body)) == 1;
  total = len;
  ok = ok && EVP_CIPHER_CTX_ctrl(cctx.get(), EVP_CTRL_GCM_SET_TAG, static_cast<int>(kTagBytes),
                                 ct.data() + body) == 1;
  ok = ok && EVP_DecryptFinal_ex(cctx.get(), reinterpret_cast<unsigned char*>(plain.data()) + total, &len) == 1;
  OPENSSL_cleanse(session.data(), session.size());
  if (!ok) throw fail();
  plain.resize(static_cast<std::size_t>(total + len));
  return plain;
}

std::string format_cert_time(CertTime t) {
  std::time_t tt = static_cast<std::time_t>(t.time_since_epoch().count());
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::string out;
  out += kDays[static_cast<std::size_t>(tm.tm_wday)];
  out += ' ';
  out += kMonths[static_cast<std::size_t>(tm.tm_mon)];
  out += ' ' + two_digits(tm.tm_mday) + ' ' + two_digits(tm.tm_hour) + ':' + two_digits(tm.tm_min) + ':' +
         two_digits(tm.tm_sec) + " UTC " + std::to_string(tm.tm_year + 1900);
  return out;
}

CertTime parse_cert_time(std::string_view s) {
  // Www Mmm dd hh:mm:ss UTC yyyy
  std::istringstream in{std::string(s)};
  std::string day, month, clock, zone;
  int mday = 0, year = 0;
  in >> day >> month >> mday >> clock >> zone >> year;
  std::string rest;
  if (!in || (in >> rest) || zone != "UTC" || clock.size() != 8 || clock[2] != ':' || clock[5] != ':') {
    throw Error(Errc::InvalidArgument, "invalid certificate date '" + std::string(s) + "'");
  }
  std::tm tm{};
  auto mit = std::find(kMonths.begin(), kMonths.end(), month);
  if (mit == kMonths.end()) throw Error(Errc::InvalidArgument, "invalid month '" + month + "'");
  tm.tm_mon = static_cast<int>(mit - kMonths.begin());
  tm.tm_mday = mday;
  tm.tm_year = year - 1900;
  try {
    tm.tm_hour = std::stoi(clock.substr(0, 2));
    tm.tm_min = std::stoi(clock.substr(3, 2));
    tm.tm_sec = std::stoi(clock.substr(6, 2));
  } catch (const std::exception&) {
    throw Error(Errc::InvalidArgument, "invalid time '" + clock + "'");
  }
  CertTime t{std::chrono::seconds(timegm(&tm))};
  if (format_cert_time(t) != s) throw Error(Errc::InvalidArgument, "inconsistent certificate date '" + std::string(s) + "'");
  return t;
}

Certificate issue_certificate(const KeyPair& key, std::string subject_dn, int validity_days,
                              std::optional<CertTime> not_before) {
  if (validity_days < 1) throw Error(Errc::InvalidArgument, "validity must be at least one day");
  Certificate c;
  c.serial = next_serial();
  c.issuer_dn = subject_dn;
  c.subject_dn = std::move(subject_dn);
  c.not_before = not_before.value_or(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
  c.not_after = c.not_before + std::chrono::days(validity_days);
  c.public_key = key.public_key();
  c.signature = rsa_sign(as_span(tbs_text(c)), key.evp().pkey);
  return c;
}

std::string render_certificate_text(const Certificate& cert) {
  std::string out;
  out += kBeginBanner;
  out += '\n';
  out += tbs_text(cert);
  out += "Signature Algorithm: " + cert.signature_algorithm + "\n";
  out += "Signature:\n";
  out += wrap_digits(bytes_to_decimal(cert.signature));
  out += kEndBanner;
  out += '\n';
  return out;
}

Certificate parse_certificate_text(std::string_view text) {
  std::vector<std::string> lines;
  {
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
  }
  std::size_t i = 0;
  auto bad = [](const std::string& why) { return Error(Errc::InvalidArgument, "certificate text: " + why); };
  auto expect_prefix = [&](std::string_view prefix) -> std::string {
    if (i >= lines.size() || lines[i].rfind(prefix, 0) != 0) throw bad("expected '" + std::string(prefix) + "'");
    return lines[i++].substr(prefix.size());
  };
  auto digit_run = [&]() {
    std::string digits;
    while (i < lines.size() && !lines[i].empty() &&
           lines[i].find_first_not_of("0123456789") == std::string::npos) {
      digits += lines[i++];
    }
    if (digits.empty()) throw bad("expected decimal digits");
    return digits;
  };

  if (expect_prefix(kBeginBanner) != "") throw bad("trailing text after banner");
  Certificate c;
  c.version_label = expect_prefix("Type: ");
  std::string serial = expect_prefix("Serial number: ");
  for (std::size_t p = 0; p < serial.size(); p += 3) {
    if (p + 2 > serial.size() || (p + 2 < serial.size() && serial[p + 2] != ':')) throw bad("bad serial");
    c.serial.push_back(from_hex(serial.substr(p, 2)).front());
  }
  c.subject_dn = expect_prefix("SubjectDN: ");
  c.issuer_dn = expect_prefix("IssuerDN: ");
  c.not_before = parse_cert_time(expect_prefix("Start Date: "));
  c.not_after = parse_cert_time(expect_prefix("Final Date: "));
  if (expect_prefix("Public Key: ") != "RSA") throw bad("unsupported key type");
  if (!expect_prefix("modulus:").empty()) throw bad("text after 'modulus:'");
  c.public_key.modulus = decimal_to_bytes(digit_run());
  c.public_key.exponent = decimal_to_bytes(expect_prefix("public exponent:"));
  c.signature_algorithm = expect_prefix("Signature Algorithm: ");
  if (!expect_prefix("Signature:").empty()) throw bad("text after 'Signature:'");
  c.signature = decimal_to_bytes(digit_run());
  if (!expect_prefix(kEndBanner).empty()) throw bad("trailing text after banner");
  while (i < lines.size()) {
    if (!lines[i++].empty()) throw bad("content after end banner");
  }
  // Signatures may start with zero bytes that the decimal form drops.
  std::size_t sig_len = (static_cast<std::size_t>(c.public_key.bits()) + 7) / 8;
  if (c.signature.size() < sig_len) c.signature.insert(c.signature.begin(), sig_len - c.signature.size(), 0);
  return c;
}

bool verify_certificate(const Certificate& cert) {
  if (cert.not_after <= cert.not_before || cert.public_key.modulus.empty()) return false;
  auto pub = public_evp(cert.public_key);
  return rsa_verify(as_span(tbs_text(cert)), cert.signature, pub->pkey);
}

KeyStore::KeyStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path KeyStore::key_path(std::string_view service) const {
  return dir_ / (std::string(service) + ".key");
}

std::filesystem::path KeyStore::cert_path(std::string_view service) const {
  return dir_ / (std::string(service) + ".cert");
}

bool KeyStore::exists(std::string_view service) const {
  std::error_code ec;
  return std::filesystem::exists(key_path(service), ec) || std::filesystem::exists(cert_path(service), ec);
}

void KeyStore::save(std::string_view service, const KeyPair& key, const Certificate& cert, bool overwrite) const {
  namespace fs = std::filesystem;
  if (!overwrite && exists(service)) {
    throw Error(Errc::IoFailure, "key material for '" + std::string(service) + "' already exists");
  }
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(Errc::IoFailure, "cannot create key directory " + dir_.string() + ": " + ec.message());

  auto write = [](const fs::path& p, const std::string& content, fs::perms perms) {
    fs::path tmp = p;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(Errc::IoFailure, "cannot write " + tmp.string());
      // Restrict before any secret bytes land in the file.
      std::error_code pec;
      fs::permissions(tmp, perms, fs::perm_options::replace, pec);
      out << content;
      if (!out.flush()) throw Error(Errc::IoFailure, "cannot write " + tmp.string());
    }
    std::error_code rec;
    fs::rename(tmp, p, rec);
    if (rec) throw Error(Errc::IoFailure, "cannot move " + tmp.string() + ": " + rec.message());
  };
  write(key_path(service), key.private_pem(), fs::perms::owner_read | fs::perms::owner_write);
  write(cert_path(service), render_certificate_text(cert),
        fs::perms::owner_read | fs::perms::owner_write | fs::perms::group_read | fs::perms::others_read);
}

std::pair<KeyPair, Certificate> KeyStore::load(std::string_view service) const {
  std::ifstream in(key_path(service), std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot read " + key_path(service).string());
  std::stringstream ss;
  ss << in.rdbuf();
  KeyPair key = KeyPair::from_private_pem(ss.str());
  Certificate cert = load_certificate(service);
  if (!(cert.public_key == key.public_key())) {
    throw Error(Errc::IoFailure, "certificate for '" + std::string(service) + "' does not match its key");
  }
  return {std::move(key), std::move(cert)};
}

Certificate KeyStore::load_certificate(std::string_view service) const {
  std::ifstream in(cert_path(service), std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot read " + cert_path(service).string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_certificate_text(ss.str());
  } catch (const Error& e) {
    throw Error(Errc::IoFailure, cert_path(service).string() + ": " + e.what());
  }
}

}  // namespace mobilehost

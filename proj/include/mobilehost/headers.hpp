#pragma once

// SOAP header entries in urn:mobilehost:headers: Auth, Signature and the
// Encrypted marker, plus the EncryptedBody call that carries ciphertext.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mobilehost/security.hpp"
#include "mobilehost/soap.hpp"

namespace mobilehost {

inline constexpr std::string_view kHeaderNs = "urn:mobilehost:headers";
inline constexpr std::string_view kEncryptedBodyOperation = "EncryptedBody";

struct AuthHeader {
  std::string login;
  std::string password_proof;
  std::string device_id;

  friend bool operator==(const AuthHeader&, const AuthHeader&) = default;
};

struct SignatureHeader {
  SignatureBlock block;
  std::optional<std::string> certificate;  // rendered certificate text of the signer
};

struct EncryptedMarker {
  std::optional<std::string> service;  // service name, for transports without a path
};

HeaderEntry make_auth_header(const AuthHeader& auth);
HeaderEntry make_signature_header(const SignatureHeader& sig);
HeaderEntry make_encrypted_marker(const EncryptedMarker& marker);

SoapCall make_encrypted_call(const CipherEnvelope& cipher);
// Throws Error(InvalidArgument) when the call is not a well-formed EncryptedBody.
CipherEnvelope cipher_from_call(const SoapCall& call);

struct KnownHeaders {
  std::optional<AuthHeader> auth;
  std::optional<SignatureHeader> signature;
  std::optional<EncryptedMarker> encrypted;
  // mustUnderstand entries outside the set above.
  std::vector<QName> not_understood;
};

// Reads header entries from a raw envelope. Throws Error(MalformedXml) or
// Error(InvalidArgument) when a known entry is missing a field.
KnownHeaders read_headers(std::string_view raw_envelope);

// Serializes env, then appends a Signature header over its canonical Body.
std::string serialize_signed(SoapEnvelope env, const KeyPair& key, std::optional<std::string> certificate_text = {});

// Checks a Signature header against the canonical Body of raw_envelope.
bool verify_envelope_signature(std::string_view raw_envelope, const SignatureBlock& sig, const PublicKey& key);

}  // namespace mobilehost

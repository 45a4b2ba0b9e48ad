#include "mobilehost/headers.hpp"

#include "mobilehost/error.hpp"
#include "mobilehost/xml.hpp"

namespace mobilehost {

namespace {

std::string open_entry(std::string_view local) {
  return "<mh:" + std::string(local) + " xmlns:mh=\"" + std::string(kHeaderNs) + "\"";
}

std::string field(std::string_view name, std::string_view value) {
  return "<mh:" + std::string(name) + ">" + xml::escape_text(value) + "</mh:" + std::string(name) + ">";
}

std::string required_field(const xml::Element& entry, std::string_view name) {
  const auto* f = entry.first_child(kHeaderNs, name);
  if (!f) throw Error(Errc::InvalidArgument, entry.local + " header lacks " + std::string(name));
  return f->text_content();
}

const TypedValue& string_param(const SoapCall& call, std::size_t i, std::string_view name) {
  const auto& p = call.params[i];
  if (p.name != name || p.value.type() != XsdType::String) {
    throw Error(Errc::InvalidArgument, "EncryptedBody parameter " + std::to_string(i + 1) + " must be string " +
                                           std::string(name));
  }
  return p.value;
}

}  // namespace

HeaderEntry make_auth_header(const AuthHeader& auth) {
  HeaderEntry h;
  h.name = {"Auth", std::string(kHeaderNs)};
  h.raw = open_entry("Auth") + ">" + field("login", auth.login) + field("passwordProof", auth.password_proof) +
          field("deviceId", auth.device_id) + "</mh:Auth>";
  return h;
}

HeaderEntry make_signature_header(const SignatureHeader& sig) {
  HeaderEntry h;
  h.name = {"Signature", std::string(kHeaderNs)};
  h.raw = open_entry("Signature") + ">" + field("SignatureMethod", sig.block.algorithm) +
          field("DigestMethod", sig.block.digest_algorithm) + field("SignatureValue", sig.block.value);
  if (sig.certificate) h.raw += field("Certificate", *sig.certificate);
  h.raw += "</mh:Signature>";
  return h;
}

HeaderEntry make_encrypted_marker(const EncryptedMarker& marker) {
  HeaderEntry h;
  h.name = {"Encrypted", std::string(kHeaderNs)};
  h.raw = open_entry("Encrypted");
  if (marker.service) h.raw += " service=\"" + xml::escape_attribute(*marker.service) + "\"";
  h.raw += "/>";
  return h;
}

SoapCall make_encrypted_call(const CipherEnvelope& cipher) {
  SoapCall call;
  call.operation = {std::string(kEncryptedBodyOperation), std::string(kHeaderNs)};
  call.params = {{"wrappedKey", TypedValue::string(cipher.wrapped_key)},
                 {"iv", TypedValue::string(cipher.iv)},
                 {"ciphertext", TypedValue::string(cipher.ciphertext)}};
  return call;
}

CipherEnvelope cipher_from_call(const SoapCall& call) {
  if (call.operation.local != kEncryptedBodyOperation || call.operation.ns != kHeaderNs) {
    throw Error(Errc::InvalidArgument, "encrypted request must carry an EncryptedBody call");
  }
  if (call.params.size() != 3) throw Error(Errc::InvalidArgument, "EncryptedBody takes exactly three parameters");
  return CipherEnvelope{string_param(call, 0, "wrappedKey").as_string(), string_param(call, 1, "iv").as_string(),
                        string_param(call, 2, "ciphertext").as_string()};
}

KnownHeaders read_headers(std::string_view raw_envelope) {
  xml::Document doc = xml::parse(raw_envelope);
  KnownHeaders out;
  const xml::Element* header = doc.root->first_child(kSoapEnvelopeNs, "Header");
  if (!header) return out;
  for (const auto* entry : header->child_elements()) {
    if (entry->ns == kHeaderNs && entry->local == "Auth") {
      out.auth = AuthHeader{required_field(*entry, "login"), required_field(*entry, "passwordProof"),
                            required_field(*entry, "deviceId")};
    } else if (entry->ns == kHeaderNs && entry->local == "Signature") {
      SignatureHeader sig;
      sig.block.algorithm = required_field(*entry, "SignatureMethod");
      sig.block.digest_algorithm = required_field(*entry, "DigestMethod");
      sig.block.value = required_field(*entry, "SignatureValue");
      if (const auto* cert = entry->first_child(kHeaderNs, "Certificate")) sig.certificate = cert->text_content();
      out.signature = std::move(sig);
    } else if (entry->ns == kHeaderNs && entry->local == "Encrypted") {
      EncryptedMarker m;
      if (const auto* svc = entry->find_attribute("", "service")) m.service = svc->value;
      out.encrypted = std::move(m);
    } else if (const auto* mu = entry->find_attribute(kSoapEnvelopeNs, "mustUnderstand");
               mu && (mu->value == "1" || mu->value == "true")) {
      out.not_understood.push_back({entry->local, entry->ns});
    }
  }
  return out;
}

std::string serialize_signed(SoapEnvelope env, const KeyPair& key, std::optional<std::string> certificate_text) {
  std::string unsigned_text = serialize_envelope(env);
  SignatureBlock block = sign_message(canonical_body(unsigned_text), key);
  env.headers.push_back(make_signature_header({std::move(block), std::move(certificate_text)}));
  return serialize_envelope(env);
}

bool verify_envelope_signature(std::string_view raw_envelope, const SignatureBlock& sig, const PublicKey& key) {
  return verify_signature(canonical_body(raw_envelope), sig, key);
}

}  // namespace mobilehost

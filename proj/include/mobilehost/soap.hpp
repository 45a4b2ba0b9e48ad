#pragma once

// SOAP 1.1 envelope model, parser and serializer.
//
// Requests are written with the SOAP-ENV prefix and no XML declaration;
// responses and faults use the soap prefix and carry an XML declaration.
// Parsing accepts any prefix bound to the SOAP 1.1 envelope namespace.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mobilehost {

inline constexpr std::string_view kSoapEnvelopeNs = "http://schemas.xmlsoap.org/soap/envelope/";
inline constexpr std::string_view kSoapEncodingNs = "http://schemas.xmlsoap.org/soap/encoding/";
inline constexpr std::string_view kXsdNs = "http://www.w3.org/2001/XMLSchema";
inline constexpr std::string_view kXsiNs = "http://www.w3.org/2001/XMLSchema-instance";

enum class XsdType { String, Int, Double, Boolean };

std::string_view xsd_name(XsdType t);  // "string", "int", ...
std::optional<XsdType> xsd_type_from_name(std::string_view local_name);

struct QName {
  std::string local;
  std::string ns;

  friend bool operator==(const QName&, const QName&) = default;
};

class TypedValue {
 public:
  using Value = std::variant<std::string, std::int32_t, double, bool>;

  TypedValue() : TypedValue(string("")) {}

  static TypedValue string(std::string s);
  static TypedValue integer(std::int32_t v);
  static TypedValue number(double v);
  static TypedValue boolean(bool v);
  // Throws Error(InvalidLexical) when `lexical` is not in the lexical space.
  static TypedValue parse(XsdType type, std::string_view lexical);

  XsdType type() const { return type_; }
  const std::string& lexical() const { return lexical_; }
  const Value& value() const { return value_; }

  const std::string& as_string() const { return std::get<std::string>(value_); }
  std::int32_t as_int() const { return std::get<std::int32_t>(value_); }
  double as_double() const { return std::get<double>(value_); }
  bool as_bool() const { return std::get<bool>(value_); }

  // Equal type and equal value; doubles compare bitwise so NaN equals NaN.
  friend bool operator==(const TypedValue& a, const TypedValue& b);

 private:
  TypedValue(XsdType t, std::string lex, Value v) : type_(t), lexical_(std::move(lex)), value_(std::move(v)) {}

  XsdType type_;
  std::string lexical_;
  Value value_;
};

struct Parameter {
  std::string name;
  TypedValue value;

  friend bool operator==(const Parameter&, const Parameter&) = default;
};

struct ExtraAttribute {
  QName name;
  std::string value;

  friend bool operator==(const ExtraAttribute&, const ExtraAttribute&) = default;
};

struct SoapCall {
  QName operation;
  std::optional<std::string> id;
  // Attributes other than `id` on the call element, kept opaquely (e.g. SOAP-ENC:root).
  std::vector<ExtraAttribute> attributes;
  std::vector<Parameter> params;

  friend bool operator==(const SoapCall&, const SoapCall&) = default;
};

struct SoapResponseBody {
  QName operation;         // <method>Response
  std::string result_name; // <method>Result
  TypedValue result;

  static SoapResponseBody for_method(std::string_view method, std::string ns, TypedValue result);

  friend bool operator==(const SoapResponseBody&, const SoapResponseBody&) = default;
};

enum class FaultCode { VersionMismatch, MustUnderstand, Client, Server };

std::string_view to_string(FaultCode c);
std::optional<FaultCode> fault_code_from_string(std::string_view s);

struct SoapFault {
  FaultCode code = FaultCode::Server;
  std::string faultstring;
  std::optional<std::string> detail;

  friend bool operator==(const SoapFault&, const SoapFault&) = default;
};

struct HeaderEntry {
  QName name;
  std::string raw;  // verbatim XML of the entry element
  bool must_understand = false;

  friend bool operator==(const HeaderEntry& a, const HeaderEntry& b) {
    return a.name == b.name && a.raw == b.raw;
  }
};

using SoapBody = std::variant<SoapCall, SoapResponseBody, SoapFault>;

struct SoapEnvelope {
  std::vector<HeaderEntry> headers;
  SoapBody body;
  std::optional<std::string> encoding_style;

  bool is_call() const { return std::holds_alternative<SoapCall>(body); }
  bool is_response() const { return std::holds_alternative<SoapResponseBody>(body); }
  bool is_fault() const { return std::holds_alternative<SoapFault>(body); }
  const HeaderEntry* find_header(std::string_view ns, std::string_view local) const;

  friend bool operator==(const SoapEnvelope&, const SoapEnvelope&) = default;
};

// Throws Error with MalformedXml, NotSoap, VersionMismatch, UnsupportedType
// or InvalidLexical.
SoapEnvelope parse_envelope(std::string_view raw);
std::string serialize_envelope(const SoapEnvelope& env);

SoapEnvelope make_fault(FaultCode code, std::string message, std::optional<std::string> detail = std::nullopt);

// Canonical bytes of the Body element of a serialized envelope, with the
// namespace bindings it inherits from the Envelope attached. This is the
// exact input to message signatures.
std::string canonical_body(std::string_view raw_envelope);

// Canonical form of any well-formed XML document.
std::string canonicalize(std::string_view raw);

}  // namespace mobilehost

#include "mobilehost/soap.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <limits>

#include "mobilehost/error.hpp"
#include "mobilehost/xml.hpp"

namespace mobilehost {

namespace {

constexpr std::string_view kRequestPrefix = "SOAP-ENV";
constexpr std::string_view kResponsePrefix = "soap";

std::string_view trim(std::string_view s) {
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (!s.empty() && space(s.front())) s.remove_prefix(1);
  while (!s.empty() && space(s.back())) s.remove_suffix(1);
  return s;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// [+-]? (digits ('.' digits?)? | '.' digits) ([eE] [+-]? digits)?
bool is_decimal_lexical(std::string_view s) {
  if (!s.empty() && (s.front() == '+' || s.front() == '-')) s.remove_prefix(1);
  auto e = s.find_first_of("eE");
  std::string_view mantissa = s.substr(0, e);
  if (e != std::string_view::npos) {
    std::string_view exponent = s.substr(e + 1);
    if (!exponent.empty() && (exponent.front() == '+' || exponent.front() == '-')) exponent.remove_prefix(1);
    if (!all_digits(exponent)) return false;
  }
  auto dot = mantissa.find('.');
  if (dot == std::string_view::npos) return all_digits(mantissa);
  std::string_view whole = mantissa.substr(0, dot);
  std::string_view frac = mantissa.substr(dot + 1);
  if (whole.empty() && frac.empty()) return false;
  return (whole.empty() || all_digits(whole)) && (frac.empty() || all_digits(frac));
}

std::string render_double(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "INF" : "-INF";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

[[noreturn]] void invalid_lexical(XsdType t, std::string_view lexical) {
  throw Error(Errc::InvalidLexical,
              "invalid xsd:" + std::string(xsd_name(t)) + " value '" + std::string(lexical) + "'");
}

struct Writer {
  std::string out;
  std::string_view env_prefix;

  void open(std::string_view qname) {
    out += '<';
    out += qname;
  }
  void attr(std::string_view qname, std::string_view value) {
    out += ' ';
    out += qname;
    out += "=\"";
    out += xml::escape_attribute(value);
    out += '"';
  }
  void close(std::string_view qname) {
    out += "</";
    out += qname;
    out += '>';
  }
  std::string env(std::string_view local) const { return std::string(env_prefix) + ":" + std::string(local); }
};

std::string typed_attr_value(XsdType t) { return "xsd:" + std::string(xsd_name(t)); }

void write_call(Writer& w, const SoapCall& call) {
  const std::string& name = call.operation.local;
  w.open(name);
  if (!call.operation.ns.empty()) w.attr("xmlns", call.operation.ns);
  if (call.id) w.attr("id", *call.id);
  int generated = 0;
  for (const auto& a : call.attributes) {
    std::string qname;
    if (a.name.ns.empty()) {
      qname = a.name.local;
    } else if (a.name.ns == kSoapEncodingNs) {
      qname = "SOAP-ENC:" + a.name.local;
    } else if (a.name.ns == kSoapEnvelopeNs) {
      qname = w.env(a.name.local);
    } else if (a.name.ns == kXsiNs) {
      qname = "xsi:" + a.name.local;
    } else if (a.name.ns == kXsdNs) {
      qname = "xsd:" + a.name.local;
    } else if (a.name.ns == xml::kXmlNamespace) {
      qname = "xml:" + a.name.local;
    } else {
      std::string prefix = "a" + std::to_string(generated++);
      w.attr("xmlns:" + prefix, a.name.ns);
      qname = prefix + ":" + a.name.local;
    }
    w.attr(qname, a.value);
  }
  w.out += '>';
  for (const auto& p : call.params) {
    w.open(p.name);
    if (!call.operation.ns.empty()) w.attr("xmlns", "");
    w.attr("xsi:type", typed_attr_value(p.value.type()));
    w.out += '>';
    w.out += xml::escape_text(p.value.lexical());
    w.close(p.name);
  }
  w.close(name);
}

void write_response(Writer& w, const SoapResponseBody& r) {
  w.open(r.operation.local);
  if (!r.operation.ns.empty()) w.attr("xmlns", r.operation.ns);
  w.out += '>';
  w.open(r.result_name);
  w.attr("xsi:type", typed_attr_value(r.result.type()));
  w.out += '>';
  w.out += xml::escape_text(r.result.lexical());
  w.close(r.result_name);
  w.close(r.operation.local);
}

void write_fault(Writer& w, const SoapFault& f) {
  std::string fault = w.env("Fault");
  w.open(fault);
  w.out += "><faultcode>";
  w.out += to_string(f.code);
  w.out += "</faultcode><faultstring>";
  w.out += xml::escape_text(f.faultstring);
  w.out += "</faultstring>";
  if (f.detail) {
    w.out += "<detail>";
    w.out += xml::escape_text(*f.detail);
    w.out += "</detail>";
  }
  w.close(fault);
}

XsdType resolve_xsi_type(const xml::Document& doc, const xml::Element& e) {
  const auto* attr = e.find_attribute(kXsiNs, "type");
  if (!attr) return XsdType::String;
  auto resolved = xml::resolve_qname_value(doc, e, attr->value);
  if (!resolved) {
    throw Error(Errc::UnsupportedType, "unresolvable xsi:type '" + attr->value + "'");
  }
  auto t = xsd_type_from_name(resolved->local);
  if (resolved->ns != kXsdNs || !t) {
    throw Error(Errc::UnsupportedType, "unsupported xsi:type '" + attr->value + "'");
  }
  return *t;
}

TypedValue parse_simple_value(const xml::Document& doc, const xml::Element& e) {
  if (e.find_attribute("", "href")) {
    throw Error(Errc::UnsupportedType, "multi-ref value '" + e.local + "' is not supported");
  }
  if (const auto* nil = e.find_attribute(kXsiNs, "nil"); nil && (nil->value == "true" || nil->value == "1")) {
    throw Error(Errc::UnsupportedType, "nil value '" + e.local + "' is not supported");
  }
  if (e.has_element_children()) {
    throw Error(Errc::UnsupportedType, "compound value '" + e.local + "' is not supported");
  }
  return TypedValue::parse(resolve_xsi_type(doc, e), e.text_content());
}

bool looks_like_response(const xml::Element& e) {
  constexpr std::string_view suffix = "Response";
  if (e.local.size() <= suffix.size() || !e.local.ends_with(suffix)) return false;
  auto kids = e.child_elements();
  if (kids.size() != 1 || e.has_significant_text()) return false;
  std::string expected = e.local.substr(0, e.local.size() - suffix.size()) + "Result";
  return kids.front()->local == expected;
}

SoapFault parse_fault(const xml::Document& doc, const xml::Element& e) {
  SoapFault f;
  const xml::Element* code = nullptr;
  const xml::Element* str = nullptr;
  const xml::Element* detail = nullptr;
  for (const auto* c : e.child_elements()) {
    if (c->local == "faultcode") code = c;
    else if (c->local == "faultstring") str = c;
    else if (c->local == "detail") detail = c;
  }
  if (!code || !str) throw Error(Errc::MalformedXml, "fault lacks faultcode or faultstring");
  std::string code_text(trim(code->text_content()));
  auto resolved = xml::resolve_qname_value(doc, *code, code_text);
  std::string local = code_text;
  if (resolved && code_text.find(':') != std::string::npos) {
    if (resolved->ns != kSoapEnvelopeNs) throw Error(Errc::MalformedXml, "faultcode outside SOAP namespace");
    local = resolved->local;
  }
  // Dotted subcodes (Client.Authentication) collapse onto their base code.
  local = local.substr(0, local.find('.'));
  auto fc = fault_code_from_string(local);
  if (!fc) throw Error(Errc::MalformedXml, "unknown faultcode '" + code_text + "'");
  f.code = *fc;
  f.faultstring = str->text_content();
  if (detail) f.detail = detail->text_content();
  return f;
}

SoapCall parse_call(const xml::Document& doc, const xml::Element& e) {
  SoapCall call;
  call.operation = {e.local, e.ns};
  for (const auto& a : e.attributes) {
    if (a.ns.empty() && a.local == "id") {
      call.id = a.value;
    } else {
      call.attributes.push_back({{a.local, a.ns}, a.value});
    }
  }
  if (e.has_significant_text()) throw Error(Errc::MalformedXml, "unexpected text inside call element");
  for (const auto* p : e.child_elements()) {
    for (const auto& existing : call.params) {
      if (existing.name == p->local) throw Error(Errc::MalformedXml, "duplicate parameter '" + p->local + "'");
    }
    call.params.push_back({p->local, parse_simple_value(doc, *p)});
  }
  return call;
}

const xml::Element& envelope_root(const xml::Document& doc) {
  const xml::Element& root = *doc.root;
  if (root.local != "Envelope") throw Error(Errc::NotSoap, "root element is not a SOAP Envelope");
  if (root.ns != kSoapEnvelopeNs) {
    throw Error(Errc::VersionMismatch, "Envelope namespace '" + root.ns + "' is not SOAP 1.1");
  }
  return root;
}

}  // namespace

std::string_view xsd_name(XsdType t) {
  switch (t) {
    case XsdType::String: return "string";
    case XsdType::Int: return "int";
    case XsdType::Double: return "double";
    case XsdType::Boolean: return "boolean";
  }
  return "string";
}

std::optional<XsdType> xsd_type_from_name(std::string_view n) {
  if (n == "string") return XsdType::String;
  if (n == "int") return XsdType::Int;
  if (n == "double") return XsdType::Double;
  if (n == "boolean") return XsdType::Boolean;
  return std::nullopt;
}

TypedValue TypedValue::string(std::string s) {
  std::string lex = s;
  return TypedValue(XsdType::String, std::move(lex), std::move(s));
}

TypedValue TypedValue::integer(std::int32_t v) { return TypedValue(XsdType::Int, std::to_string(v), v); }

TypedValue TypedValue::number(double v) { return TypedValue(XsdType::Double, render_double(v), v); }

TypedValue TypedValue::boolean(bool v) { return TypedValue(XsdType::Boolean, v ? "true" : "false", v); }

TypedValue TypedValue::parse(XsdType type, std::string_view lexical) {
  if (type == XsdType::String) return string(std::string(lexical));
  std::string_view s = trim(lexical);
  switch (type) {
    case XsdType::Int: {
      std::string_view digits = s;
      bool negative = false;
      if (!digits.empty() && (digits.front() == '+' || digits.front() == '-')) {
        negative = digits.front() == '-';
        digits.remove_prefix(1);
      }
      if (!all_digits(digits)) invalid_lexical(type, lexical);
      std::int64_t magnitude = 0;
      for (char c : digits) {
        magnitude = magnitude * 10 + (c - '0');
        if (magnitude > std::int64_t{1} << 31) invalid_lexical(type, lexical);
      }
      std::int64_t v = negative ? -magnitude : magnitude;
      if (v < std::numeric_limits<std::int32_t>::min() || v > std::numeric_limits<std::int32_t>::max()) {
        invalid_lexical(type, lexical);
      }
      return TypedValue(type, std::string(s), static_cast<std::int32_t>(v));
    }
    case XsdType::Double: {
      double v = 0;
      if (s == "NaN") {
        v = std::numeric_limits<double>::quiet_NaN();
      } else if (s == "INF" || s == "+INF") {
        v = std::numeric_limits<double>::infinity();
      } else if (s == "-INF") {
        v = -std::numeric_limits<double>::infinity();
      } else {
        if (!is_decimal_lexical(s)) invalid_lexical(type, lexical);
        std::string_view body = s;
        if (body.front() == '+') body.remove_prefix(1);
        std::string buf(body);
        // from_chars rejects a bare leading or trailing '.', pad it.
        if (auto dot = buf.find('.'); dot != std::string::npos) {
          if (dot == 0 || buf[dot - 1] == '-') buf.insert(dot, "0");
        }
        auto [ptr, ec] = std::from_chars(buf.data(), buf.data() + buf.size(), v);
        if (ec != std::errc() || ptr != buf.data() + buf.size()) invalid_lexical(type, lexical);
      }
      return TypedValue(type, std::string(s), v);
    }
    case XsdType::Boolean: {
      if (s == "true" || s == "1") return TypedValue(type, std::string(s), true);
      if (s == "false" || s == "0") return TypedValue(type, std::string(s), false);
      invalid_lexical(type, lexical);
    }
    case XsdType::String: break;
  }
  invalid_lexical(type, lexical);
}

bool operator==(const TypedValue& a, const TypedValue& b) {
  if (a.type_ != b.type_) return false;
  if (a.type_ == XsdType::Double) {
    double x = std::get<double>(a.value_);
    double y = std::get<double>(b.value_);
    if (std::isnan(x) || std::isnan(y)) return std::isnan(x) && std::isnan(y);
    return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
  }
  return a.value_ == b.value_;
}

SoapResponseBody SoapResponseBody::for_method(std::string_view method, std::string ns, TypedValue result) {
  return SoapResponseBody{{std::string(method) + "Response", std::move(ns)}, std::string(method) + "Result",
                          std::move(result)};
}

std::string_view to_string(FaultCode c) {
  switch (c) {
    case FaultCode::VersionMismatch: return "VersionMismatch";
    case FaultCode::MustUnderstand: return "MustUnderstand";
    case FaultCode::Client: return "Client";
    case FaultCode::Server: return "Server";
  }
  return "Server";
}

std::optional<FaultCode> fault_code_from_string(std::string_view s) {
  if (s == "VersionMismatch") return FaultCode::VersionMismatch;
  if (s == "MustUnderstand") return FaultCode::MustUnderstand;
  if (s == "Client") return FaultCode::Client;
  if (s == "Server") return FaultCode::Server;
  return std::nullopt;
}

const HeaderEntry* SoapEnvelope::find_header(std::string_view ns, std::string_view local) const {
  for (const auto& h : headers) {
    if (h.name.ns == ns && h.name.local == local) return &h;
  }
  return nullptr;
}

SoapEnvelope parse_envelope(std::string_view raw) {
  xml::Document doc = xml::parse(raw);
  const xml::Element& root = envelope_root(doc);
  if (root.has_significant_text()) throw Error(Errc::MalformedXml, "unexpected text inside Envelope");

  SoapEnvelope env;
  const xml::Element* body = nullptr;
  bool seen_header = false;
  for (const auto* child : root.child_elements()) {
    if (child->ns == kSoapEnvelopeNs && child->local == "Header" && !seen_header && !body) {
      seen_header = true;
      if (child->has_significant_text()) throw Error(Errc::MalformedXml, "unexpected text inside Header");
      for (const auto* entry : child->child_elements()) {
        HeaderEntry h;
        h.name = {entry->local, entry->ns};
        h.raw = std::string(doc.source_of(*entry));
        if (const auto* mu = entry->find_attribute(kSoapEnvelopeNs, "mustUnderstand")) {
          auto v = trim(mu->value);
          h.must_understand = v == "1" || v == "true";
        }
        env.headers.push_back(std::move(h));
      }
    } else if (child->ns == kSoapEnvelopeNs && child->local == "Body" && !body) {
      body = child;
    } else {
      throw Error(Errc::NotSoap, "unexpected element '" + child->qualified() + "' in Envelope");
    }
  }
  if (!body) throw Error(Errc::NotSoap, "Envelope has no Body");
  if (const auto* style = body->find_attribute(kSoapEnvelopeNs, "encodingStyle")) {
    env.encoding_style = style->value;
  } else if (const auto* outer = root.find_attribute(kSoapEnvelopeNs, "encodingStyle")) {
    env.encoding_style = outer->value;
  }

  auto entries = body->child_elements();
  if (body->has_significant_text()) throw Error(Errc::MalformedXml, "unexpected text inside Body");
  if (entries.empty()) throw Error(Errc::MalformedXml, "empty body");
  if (entries.size() > 1) throw Error(Errc::MalformedXml, "Body must contain exactly one element");
  const xml::Element& payload = *entries.front();

  if (payload.ns == kSoapEnvelopeNs && payload.local == "Fault") {
    env.body = parse_fault(doc, payload);
  } else if (looks_like_response(payload)) {
    const xml::Element& result = *payload.child_elements().front();
    env.body = SoapResponseBody{{payload.local, payload.ns}, result.local, parse_simple_value(doc, result)};
  } else {
    env.body = parse_call(doc, payload);
  }
  return env;
}

std::string serialize_envelope(const SoapEnvelope& env) {
  const bool request = env.is_call();
  Writer w;
  w.env_prefix = request ? kRequestPrefix : kResponsePrefix;
  if (!request) w.out += "<?xml version=\"1.0\" encoding=\"utf-8\" ?>\n";

  std::string envelope = w.env("Envelope");
  w.open(envelope);
  w.attr("xmlns:xsi", kXsiNs);
  w.attr("xmlns:xsd", kXsdNs);
  if (request) w.attr("xmlns:SOAP-ENC", kSoapEncodingNs);
  w.attr("xmlns:" + std::string(w.env_prefix), kSoapEnvelopeNs);
  w.out += '>';

  if (!env.headers.empty()) {
    std::string header = w.env("Header");
    w.open(header);
    w.out += '>';
    for (const auto& h : env.headers) w.out += h.raw;
    w.close(header);
  }

  std::string body = w.env("Body");
  w.open(body);
  if (env.encoding_style) w.attr(w.env("encodingStyle"), *env.encoding_style);
  w.out += '>';
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, SoapCall>) write_call(w, b);
        else if constexpr (std::is_same_v<T, SoapResponseBody>) write_response(w, b);
        else write_fault(w, b);
      },
      env.body);
  w.close(body);
  w.close(envelope);
  return std::move(w.out);
}

SoapEnvelope make_fault(FaultCode code, std::string message, std::optional<std::string> detail) {
  SoapEnvelope env;
  env.body = SoapFault{code, std::move(message), std::move(detail)};
  return env;
}

std::string canonical_body(std::string_view raw_envelope) {
  xml::Document doc = xml::parse(raw_envelope);
  const xml::Element& root = envelope_root(doc);
  const xml::Element* body = root.first_child(kSoapEnvelopeNs, "Body");
  if (!body) throw Error(Errc::NotSoap, "Envelope has no Body");
  return xml::canonicalize(*body, doc.inherited_scope(*body));
}

std::string canonicalize(std::string_view raw) { return xml::canonicalize(raw); }

}  // namespace mobilehost

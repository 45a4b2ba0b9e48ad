#include "mobilehost/client.hpp"

#include <charconv>

#include <httplib.h>

#include "mobilehost/wsdl.hpp"

namespace mobilehost {

namespace {

constexpr auto kClientTimeout = std::chrono::seconds(30);

httplib::Client http_client(const Endpoint& ep) {
  httplib::Client cli(ep.host, ep.port);
  cli.set_connection_timeout(kClientTimeout);
  cli.set_read_timeout(kClientTimeout);
  cli.set_write_timeout(kClientTimeout);
  return cli;
}

[[noreturn]] void http_failure(const Endpoint& ep, httplib::Error err) {
  throw Error(Errc::IoFailure, "http://" + ep.host + ":" + std::to_string(ep.port) + ": " + httplib::to_string(err));
}

}  // namespace

Endpoint Endpoint::parse(std::string_view url) {
  auto sep = url.find("://");
  if (sep == std::string_view::npos) throw Error(Errc::InvalidArgument, "bad endpoint '" + std::string(url) + "'");
  std::string_view rest = url.substr(sep + 3);
  auto slash = rest.find('/');
  std::string_view authority = rest.substr(0, slash);
  std::string path = slash == std::string_view::npos ? std::string() : std::string(rest.substr(slash));
  if (auto q = path.find_first_of("?#"); q != std::string::npos) path.resize(q);

  BindingConfig b = BindingConfig::parse(std::string(url.substr(0, sep + 3)) + std::string(authority));
  Endpoint ep;
  ep.kind = b.kind;
  ep.host = b.address;
  ep.port = b.port;
  ep.path = path;
  if (ep.kind == TransportKind::Http && ep.path.empty()) ep.path = "/";
  return ep;
}

Reply post_envelope(const Endpoint& ep, std::string_view envelope) {
  switch (ep.kind) {
    case TransportKind::Http: {
      auto cli = http_client(ep);
      httplib::Headers headers{{"SOAPAction", "\"\""}};
      auto res = cli.Post(ep.path, headers, std::string(envelope), "text/xml; charset=utf-8");
      if (!res) http_failure(ep, res.error());
      return Reply{res->status, res->get_header_value("Content-Type"), res->body};
    }
    case TransportKind::RawTcp:
      return Reply{200, "text/xml; charset=utf-8", tcp_roundtrip(ep.host, ep.port, envelope, kClientTimeout)};
    case TransportKind::Loopback: {
      OutboundResponse r = loopback_roundtrip(ep.host, envelope, ep.path);
      return Reply{200, r.content_type, std::move(r.body)};
    }
  }
  throw Error(Errc::InvalidArgument, "unknown transport");
}

std::string http_get(const Endpoint& ep, std::string_view query) {
  if (ep.kind != TransportKind::Http) {
    throw Error(Errc::InvalidArgument, "service descriptions are only served over http");
  }
  auto cli = http_client(ep);
  auto res = cli.Get(ep.path + "?" + std::string(query));
  if (!res) http_failure(ep, res.error());
  if (res->status == 404) throw Error(Errc::NotFound, ep.path + "?" + std::string(query) + " not found");
  if (res->status != 200) {
    throw Error(Errc::IoFailure, "GET " + ep.path + "?" + std::string(query) + " returned " + std::to_string(res->status));
  }
  return res->body;
}

ServiceDescriptor fetch_descriptor(const Endpoint& ep) { return parse_wsdl(http_get(ep, "wsdl")); }

SoapCall build_call(const ServiceDescriptor& desc, std::string_view method, const std::vector<std::string>& args) {
  const MethodSignature* sig = desc.find_method(method);
  if (!sig) throw Error(Errc::UnknownMethod, "service " + desc.service_name + " has no method " + std::string(method));
  SoapCall call;
  call.operation = {sig->name, desc.namespace_uri};
  call.id = "o0";
  call.attributes.push_back({{"root", std::string(kSoapEncodingNs)}, "1"});
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i < sig->params.size()) {
      call.params.push_back({sig->params[i].name, TypedValue::parse(sig->params[i].type, args[i])});
    } else {
      call.params.push_back({"arg" + std::to_string(i + 1), TypedValue::string(args[i])});
    }
  }
  return call;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::NotChecked: return "not checked";
    case Verdict::Pass: return "PASS";
    case Verdict::Fail: return "FAIL";
  }
  return "not checked";
}

std::string build_request(const SoapCall& call, const InvokeOptions& opts) {
  SoapEnvelope env;
  env.body = call;
  env.encoding_style = std::string(kSoapEncodingNs);
  if (opts.auth && !opts.encrypt_for) env.headers.push_back(make_auth_header(*opts.auth));

  std::string inner;
  if (opts.sign) {
    KeyPair key = generate_keypair();
    Certificate cert = issue_certificate(key, "Consumer/" + call.operation.local);
    inner = serialize_signed(env, key, render_certificate_text(cert));
  } else {
    inner = serialize_envelope(env);
  }
  if (!opts.encrypt_for) return inner;

  SoapEnvelope outer;
  outer.encoding_style = std::string(kSoapEncodingNs);
  outer.headers.push_back(make_encrypted_marker({opts.service_name}));
  if (opts.auth) outer.headers.push_back(make_auth_header(*opts.auth));
  outer.body = make_encrypted_call(encrypt_message(inner, *opts.encrypt_for));
  return serialize_envelope(outer);
}

InvokeResult invoke(const Endpoint& ep, const SoapCall& call, const InvokeOptions& opts) {
  InvokeResult out;
  out.reply = post_envelope(ep, build_request(call, opts));
  try {
    out.response = parse_envelope(out.reply.body);
  } catch (const Error& e) {
    out.parse_error = e.what();
  }
  if (opts.verify_with) {
    out.verdict = Verdict::Fail;
    if (out.response) {
      try {
        KnownHeaders h = read_headers(out.reply.body);
        if (h.signature && verify_envelope_signature(out.reply.body, h.signature->block, *opts.verify_with)) {
          out.verdict = Verdict::Pass;
        }
      } catch (const Error&) {
      }
    }
  }
  return out;
}

}  // namespace mobilehost

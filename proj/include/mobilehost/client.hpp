#pragma once

// Consumer side: build calls from a service description, send them over any
// transport, and check signed responses.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mobilehost/headers.hpp"
#include "mobilehost/service_model.hpp"
#include "mobilehost/transport.hpp"

namespace mobilehost {

struct Endpoint {
  TransportKind kind = TransportKind::Http;
  std::string host;  // loopback: endpoint name
  int port = kDefaultPort;
  std::string path;  // empty routes by the call's namespace

  // "http://host:port/path", "tcp://host:port" or "loopback://name/path".
  static Endpoint parse(std::string_view url);
};

struct Reply {
  int status = 200;  // always 200 for rawTcp and loopback
  std::string content_type;
  std::string body;
};

// Throws Error(IoFailure), Error(PeerGone) or Error(Timeout).
Reply post_envelope(const Endpoint& ep, std::string_view envelope);
// HTTP GET <path>?<query>. Throws Error(NotFound) on 404, IoFailure otherwise.
std::string http_get(const Endpoint& ep, std::string_view query);
ServiceDescriptor fetch_descriptor(const Endpoint& ep);

// Positional string arguments typed by the method's signature. Extra
// arguments are sent as strings so the host, not the client, judges arity.
// Throws Error(UnknownMethod) or Error(InvalidLexical).
SoapCall build_call(const ServiceDescriptor& desc, std::string_view method, const std::vector<std::string>& args);

struct InvokeOptions {
  std::optional<AuthHeader> auth;
  bool sign = false;                        // signs with a fresh key and embeds its certificate
  std::optional<PublicKey> encrypt_for;     // wraps the request for this key
  std::optional<std::string> service_name;  // routing hint inside encrypted requests
  std::optional<PublicKey> verify_with;     // checks the response signature
};

enum class Verdict { NotChecked, Pass, Fail };
std::string_view to_string(Verdict v);

struct InvokeResult {
  Reply reply;
  std::optional<SoapEnvelope> response;  // empty when the reply did not parse
  std::string parse_error;
  Verdict verdict = Verdict::NotChecked;
};

// The envelope text that invoke() would send.
std::string build_request(const SoapCall& call, const InvokeOptions& opts);
InvokeResult invoke(const Endpoint& ep, const SoapCall& call, const InvokeOptions& opts = {});

}  // namespace mobilehost

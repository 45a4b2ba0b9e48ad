#include "generators.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "mobilehost/xml.hpp"

namespace mobilehost::testing {

namespace {

template <class T>
T pick(Rng& rng, std::initializer_list<T> items) {
  std::uniform_int_distribution<std::size_t> d(0, items.size() - 1);
  return *(items.begin() + d(rng));
}

std::size_t below(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

bool coin(Rng& rng) { return below(rng, 2) == 0; }

std::string unique_name(Rng& rng, std::set<std::string>& used, std::size_t max_len = 12) {
  for (;;) {
    std::string n = random_ncname(rng, max_len);
    if (n.ends_with("Response")) continue;
    if (used.insert(n).second) return n;
  }
}

}  // namespace

std::string random_ncname(Rng& rng, std::size_t max_len) {
  static const std::string first = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_";
  static const std::string rest = first + "0123456789-.";
  std::size_t len = 1 + below(rng, max_len);
  std::string s(1, first[below(rng, first.size())]);
  while (s.size() < len) s += rest[below(rng, rest.size())];
  return s;
}

std::string random_text(Rng& rng, std::size_t max_len) {
  static const std::vector<std::string> pieces = {
      "a", "Z", "0", " ", "  ", "\t", "\n", "\r", "&", "<", ">", "\"", "'", ";", "#", "]]>", "é", "ç", "日本", "€", "\xF0\x9F\x93\xB1"};
  std::size_t len = below(rng, max_len + 1);
  std::string s;
  while (s.size() < len) {
    if (coin(rng)) {
      s += static_cast<char>(' ' + below(rng, 95));
    } else {
      s += pieces[below(rng, pieces.size())];
    }
  }
  return s;
}

XsdType random_type(Rng& rng) {
  return pick(rng, {XsdType::String, XsdType::Int, XsdType::Double, XsdType::Boolean});
}

TypedValue random_value_of(Rng& rng, XsdType t) {
  switch (t) {
    case XsdType::String:
      return TypedValue::string(random_text(rng));
    case XsdType::Int: {
      switch (below(rng, 4)) {
        case 0: return TypedValue::integer(std::numeric_limits<std::int32_t>::min());
        case 1: return TypedValue::integer(std::numeric_limits<std::int32_t>::max());
        default: return TypedValue::integer(static_cast<std::int32_t>(rng()));
      }
    }
    case XsdType::Double: {
      switch (below(rng, 10)) {
        case 0: return TypedValue::number(std::numeric_limits<double>::quiet_NaN());
        case 1: return TypedValue::number(std::numeric_limits<double>::infinity());
        case 2: return TypedValue::number(-std::numeric_limits<double>::infinity());
        case 3: return TypedValue::number(-0.0);
        case 4: return TypedValue::number(std::numeric_limits<double>::denorm_min());
        case 5: return TypedValue::number(std::numeric_limits<double>::max());
        default: {
          double v = std::uniform_real_distribution<double>(-1e6, 1e6)(rng) *
                     std::pow(10.0, static_cast<double>(static_cast<int>(below(rng, 40)) - 20));
          return TypedValue::number(v);
        }
      }
    }
    case XsdType::Boolean:
      return TypedValue::boolean(coin(rng));
  }
  return TypedValue::string("");
}

TypedValue random_value(Rng& rng) { return random_value_of(rng, random_type(rng)); }

SoapEnvelope random_envelope(Rng& rng) {
  SoapEnvelope env;
  if (below(rng, 3) == 0) {
    std::size_t n = 1 + below(rng, 3);
    for (std::size_t i = 0; i < n; ++i) {
      HeaderEntry h;
      h.name = {random_ncname(rng), "urn:test:" + random_ncname(rng)};
      h.raw = "<h:" + h.name.local + " xmlns:h=\"" + h.name.ns + "\">" + xml::escape_text(random_text(rng, 10)) +
              "</h:" + h.name.local + ">";
      env.headers.push_back(std::move(h));
    }
  }
  if (coin(rng)) env.encoding_style = std::string(kSoapEncodingNs);

  switch (below(rng, 3)) {
    case 0: {
      SoapCall call;
      std::set<std::string> used;
      call.operation = {unique_name(rng, used), coin(rng) ? "urn:svc:" + random_ncname(rng) : std::string()};
      if (coin(rng)) call.id = "o" + std::to_string(below(rng, 100));
      if (coin(rng)) call.attributes.push_back({{"root", std::string(kSoapEncodingNs)}, "1"});
      if (below(rng, 4) == 0) call.attributes.push_back({{random_ncname(rng), "urn:attr:x"}, random_text(rng, 8)});
      std::size_t n = below(rng, 6);
      for (std::size_t i = 0; i < n; ++i) call.params.push_back({unique_name(rng, used), random_value(rng)});
      env.body = std::move(call);
      break;
    }
    case 1: {
      std::set<std::string> used;
      std::string method = unique_name(rng, used);
      env.body = SoapResponseBody::for_method(method, coin(rng) ? "http://www.dee.ufma.br/" : "urn:r:" + method,
                                              random_value(rng));
      break;
    }
    default: {
      SoapFault f;
      f.code = pick(rng, {FaultCode::VersionMismatch, FaultCode::MustUnderstand, FaultCode::Client, FaultCode::Server});
      f.faultstring = random_text(rng);
      if (coin(rng)) f.detail = random_text(rng);
      env.body = std::move(f);
      break;
    }
  }
  return env;
}

ServiceDescriptor random_descriptor(Rng& rng) {
  ServiceDescriptor d;
  std::set<std::string> used;
  d.service_name = unique_name(rng, used);
  d.namespace_uri = coin(rng) ? "http://localhost:5000/" + d.service_name + ".jws" : "urn:svc:" + random_ncname(rng);
  d.endpoint_path = "/" + d.service_name + (coin(rng) ? ".jws" : "");
  if (below(rng, 4) == 0) d.endpoint_path = "/services/" + random_ncname(rng) + "/" + d.service_name;
  d.response_namespace_uri = coin(rng) ? d.namespace_uri : "http://www.dee.ufma.br/" + random_ncname(rng);
  std::size_t methods = 1 + below(rng, 6);
  for (std::size_t i = 0; i < methods; ++i) {
    MethodSignature m;
    m.name = unique_name(rng, used);
    std::set<std::string> params;
    std::size_t n = below(rng, 6);
    for (std::size_t j = 0; j < n; ++j) m.params.push_back({unique_name(rng, params), random_type(rng)});
    m.return_type = random_type(rng);
    d.methods.push_back(std::move(m));
  }
  d.security_enabled = coin(rng);
  d.exclusive_execution = coin(rng);
  return d;
}

std::filesystem::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("mobilehost-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path test_data(const std::string& name) { return std::filesystem::path(MOBILEHOST_TEST_DATA) / name; }

std::string match_certificate_template(const std::string& tmpl, const std::string& text) {
  auto lines = [](const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
  };
  const auto want = lines(tmpl);
  const auto got = lines(text);
  static const std::regex serial("([0-9a-f]{2}:)*[0-9a-f]{2}");
  static const std::regex date("(Mon|Tue|Wed|Thu|Fri|Sat|Sun) (Jan|Feb|Mar|Apr|May|Jun|Jul|Aug|Sep|Oct|Nov|Dec) "
                               "[ 0-9][0-9] [0-9]{2}:[0-9]{2}:[0-9]{2} UTC [0-9]{4}");
  static const std::regex digits("[0-9]{1,43}");
  std::size_t g = 0;
  for (const auto& w : want) {
    auto at = [&]() -> std::string { return "line " + std::to_string(g + 1) + " ('" + (g < got.size() ? got[g] : "<eof>") + "')"; };
    auto pos = w.find('<');
    if (pos == std::string::npos) {
      if (g >= got.size() || got[g] != w) return at() + " should be '" + w + "'";
      ++g;
      continue;
    }
    std::string label = w.substr(0, pos);
    std::string placeholder = w.substr(pos);
    if (g >= got.size() || got[g].rfind(label, 0) != 0) return at() + " should start with '" + label + "'";
    std::string value = got[g].substr(label.size());
    if (placeholder == "<digits>") {
      std::size_t count = 0;
      while (g < got.size() && std::regex_match(got[g], digits)) {
        ++g;
        ++count;
      }
      if (count == 0) return at() + " should be a line of digits";
      continue;
    }
    bool ok = placeholder == "<serial>" ? std::regex_match(value, serial)
              : placeholder == "<date>" ? std::regex_match(value, date)
                                        : !value.empty() || placeholder == "<dn>";
    if (!ok) return at() + " does not match " + placeholder;
    ++g;
  }
  if (g != got.size()) return "unexpected trailing " + std::to_string(got.size() - g) + " line(s)";
  return {};
}

std::string raw_exchange(int port, const std::string& request) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw std::runtime_error("socket");
  timeval tv{10, 0};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    throw std::runtime_error("connect");
  }
  std::size_t sent = 0;
  while (sent < request.size()) {
    ssize_t n = ::send(fd, request.data() + sent, request.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) break;
    sent += static_cast<std::size_t>(n);
  }
  ::shutdown(fd, SHUT_WR);
  std::string out;
  char buf[8192];
  for (;;) {
    ssize_t n = ::recv(fd, buf, sizeof buf, 0);
    if (n <= 0) break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  ::close(fd);
  return out;
}

int http_status(const std::string& response) {
  if (response.rfind("HTTP/1.", 0) != 0 || response.size() < 12) return -1;
  return std::stoi(response.substr(9, 3));
}

std::string http_body(const std::string& response) {
  auto pos = response.find("\r\n\r\n");
  return pos == std::string::npos ? std::string() : response.substr(pos + 4);
}

std::string soap_post(const std::string& path, const std::string& body) {
  return "POST " + path + " HTTP/1.1\r\nHost: localhost\r\nContent-Type: text/xml; charset=utf-8\r\n"
         "SOAPAction: \"\"\r\nContent-Length: " + std::to_string(body.size()) + "\r\n\r\n" + body;
}

}  // namespace mobilehost::testing

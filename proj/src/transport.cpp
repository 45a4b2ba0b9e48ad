#include "mobilehost/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <future>

namespace mobilehost {

namespace {

constexpr std::size_t kMaxHeaderBytes = 64 * 1024;
constexpr auto kIoTimeout = std::chrono::seconds(10);

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

void set_timeouts(int fd, std::chrono::milliseconds t) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(t.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((t.count() % 1000) * 1000);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

enum class ReadStatus { Ok, Closed, TimedOut, Failed };

ReadStatus recv_some(int fd, std::string& into, std::size_t max) {
  char buf[16384];
  for (;;) {
    ssize_t n = ::recv(fd, buf, std::min(sizeof buf, max), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n < 0) return (errno == EAGAIN || errno == EWOULDBLOCK) ? ReadStatus::TimedOut : ReadStatus::Failed;
    if (n == 0) return ReadStatus::Closed;
    into.append(buf, static_cast<std::size_t>(n));
    return ReadStatus::Ok;
  }
}

ReadStatus recv_exact(int fd, std::string& into, std::size_t want) {
  while (into.size() < want) {
    auto st = recv_some(fd, into, want - into.size());
    if (st != ReadStatus::Ok) return st;
  }
  return ReadStatus::Ok;
}

std::uint32_t read_be32(std::string_view b) {
  return (std::uint32_t(std::uint8_t(b[0])) << 24) | (std::uint32_t(std::uint8_t(b[1])) << 16) |
         (std::uint32_t(std::uint8_t(b[2])) << 8) | std::uint32_t(std::uint8_t(b[3]));
}

std::string peer_name(const sockaddr_in& addr) {
  char ip[INET_ADDRSTRLEN] = {};
  ::inet_ntop(AF_INET, &addr.sin_addr, ip, sizeof ip);
  return std::string(ip) + ":" + std::to_string(ntohs(addr.sin_port));
}

sockaddr_in resolve(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) {
    throw Error(Errc::IoFailure, "cannot resolve host '" + host + "'");
  }
  sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
  ::freeaddrinfo(res);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  return addr;
}

OutboundResponse text_response(int status, std::string body) {
  return OutboundResponse{status, "text/plain; charset=utf-8", std::move(body)};
}

OutboundResponse dispatch_safely(const Dispatcher& d, const InboundRequest& req) {
  try {
    return d(req);
  } catch (const std::exception& e) {
    return text_response(500, std::string("internal error: ") + e.what());
  } catch (...) {
    return text_response(500, "internal error");
  }
}

// Counts requests a listener has accepted but not yet answered.
class InFlight {
 public:
  bool enter() {
    std::lock_guard lock(mu_);
    if (closed_) return false;
    ++count_;
    return true;
  }
  void leave() {
    std::lock_guard lock(mu_);
    if (--count_ == 0) cv_.notify_all();
  }
  void close_and_drain() {
    std::unique_lock lock(mu_);
    closed_ = true;
    cv_.wait(lock, [&] { return count_ == 0; });
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t count_ = 0;
  bool closed_ = false;
};

void serve_http(int fd, const std::string& peer, const Dispatcher& dispatcher) {
  auto reply = [&](const OutboundResponse& r) { send_all(fd, encode_http_response(r)); };

  std::string buf;
  std::size_t header_end;
  for (;;) {
    header_end = buf.find("\r\n\r\n");
    if (header_end != std::string::npos) break;
    if (buf.size() > kMaxHeaderBytes) return reply(text_response(431, "request header too large\n"));
    if (recv_some(fd, buf, kMaxHeaderBytes + 1 - std::min(buf.size(), kMaxHeaderBytes)) != ReadStatus::Ok) return;
  }

  std::string_view head(buf.data(), header_end);
  auto line_end = head.find("\r\n");
  std::string_view request_line = head.substr(0, line_end);
  auto sp1 = request_line.find(' ');
  auto sp2 = request_line.rfind(' ');
  if (sp1 == std::string_view::npos || sp2 == sp1 || request_line.substr(sp2 + 1).rfind("HTTP/1.", 0) != 0) {
    return reply(text_response(400, "bad request line\n"));
  }

  InboundRequest req;
  req.transport = TransportKind::Http;
  req.peer = peer;
  req.method = std::string(request_line.substr(0, sp1));
  std::string_view target = request_line.substr(sp1 + 1, sp2 - sp1 - 1);
  auto qpos = target.find('?');
  req.path = std::string(target.substr(0, qpos));
  if (qpos != std::string_view::npos) req.query = std::string(target.substr(qpos + 1));

  std::string_view rest = line_end == std::string_view::npos ? std::string_view() : head.substr(line_end + 2);
  while (!rest.empty()) {
    auto eol = rest.find("\r\n");
    std::string_view line = rest.substr(0, eol);
    rest = eol == std::string_view::npos ? std::string_view() : rest.substr(eol + 2);
    auto colon = line.find(':');
    if (colon == std::string_view::npos || colon == 0) return reply(text_response(400, "bad header line\n"));
    req.headers[lower(trim(line.substr(0, colon)))] = std::string(trim(line.substr(colon + 1)));
  }

  if (auto te = req.headers.find("transfer-encoding"); te != req.headers.end() && lower(te->second) != "identity") {
    return reply(text_response(501, "transfer-encoding not supported\n"));
  }
  std::size_t length = 0;
  if (auto cl = req.headers.find("content-length"); cl != req.headers.end()) {
    const auto& v = cl->second;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), length);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
      if (ec == std::errc::result_out_of_range) return reply(text_response(413, "payload too large\n"));
      return reply(text_response(400, "bad Content-Length\n"));
    }
  } else if (req.method == "POST") {
    return reply(text_response(411, "Content-Length required\n"));
  }
  if (length > kMaxPayload) return reply(text_response(413, "payload too large\n"));

  req.payload = buf.substr(header_end + 4);
  if (req.payload.size() > length) req.payload.resize(length);
  if (recv_exact(fd, req.payload, length) != ReadStatus::Ok) return;

  req.classification = classify_request(req.transport, req.method, req.headers, req.payload);
  reply(dispatch_safely(dispatcher, req));
}

void serve_frame(int fd, const std::string& peer, const Dispatcher& dispatcher) {
  std::string prefix;
  if (recv_exact(fd, prefix, 4) != ReadStatus::Ok) return;
  std::uint32_t length = read_be32(prefix);
  if (length > kMaxPayload) {
    send_all(fd, encode_frame("payload too large"));
    return;
  }
  InboundRequest req;
  req.transport = TransportKind::RawTcp;
  req.peer = peer;
  if (recv_exact(fd, req.payload, length) != ReadStatus::Ok) return;
  req.classification = classify_request(req.transport, {}, req.headers, req.payload);
  OutboundResponse resp = dispatch_safely(dispatcher, req);
  if (resp.body.size() > kMaxPayload) resp.body = "response too large";
  send_all(fd, encode_frame(resp.body));
}

class SocketListener final : public Listener {
 public:
  SocketListener(BindingConfig cfg, Dispatcher dispatcher, std::shared_ptr<WorkerPool> pool)
      : cfg_(std::move(cfg)), dispatcher_(std::move(dispatcher)), pool_(std::move(pool)) {
    sockaddr_in addr = resolve(cfg_.address, cfg_.port);
    fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) throw Error(Errc::BindFailure, std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 128) != 0) {
      std::string why = std::strerror(errno);
      ::close(fd_);
      throw Error(Errc::BindFailure, "cannot bind " + cfg_.url() + ": " + why);
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  ~SocketListener() override { stop(); }

  void stop() override {
    std::lock_guard lock(stop_mu_);
    if (stopped_) return;
    stopping_ = true;
    if (acceptor_.joinable()) acceptor_.join();
    ::close(fd_);
    inflight_->close_and_drain();
    stopped_ = true;
  }

  const BindingConfig& binding() const override { return cfg_; }
  int port() const override { return port_; }

 private:
  void accept_loop() {
    while (!stopping_) {
      pollfd p{fd_, POLLIN, 0};
      int r = ::poll(&p, 1, 50);
      if (r <= 0) continue;
      sockaddr_in peer{};
      socklen_t len = sizeof peer;
      int conn = ::accept4(fd_, reinterpret_cast<sockaddr*>(&peer), &len, SOCK_CLOEXEC);
      if (conn < 0) continue;
      if (!inflight_->enter()) {
        ::close(conn);
        continue;
      }
      set_timeouts(conn, kIoTimeout);
      int one = 1;
      ::setsockopt(conn, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      auto inflight = inflight_;
      auto dispatcher = dispatcher_;
      bool http = cfg_.kind == TransportKind::Http;
      std::string name = peer_name(peer);
      bool queued = pool_->submit([conn, inflight, dispatcher, http, name] {
        try {
          if (http) {
            serve_http(conn, name, dispatcher);
          } else {
            serve_frame(conn, name, dispatcher);
          }
        } catch (...) {
        }
        ::shutdown(conn, SHUT_WR);
        ::close(conn);
        inflight->leave();
      });
      if (!queued) {
        ::close(conn);
        inflight_->leave();
      }
    }
  }

  BindingConfig cfg_;
  Dispatcher dispatcher_;
  std::shared_ptr<WorkerPool> pool_;
  int fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::mutex stop_mu_;
  bool stopped_ = false;
  std::shared_ptr<InFlight> inflight_ = std::make_shared<InFlight>();
  std::thread acceptor_;
};

struct LoopbackEndpoint {
  Dispatcher dispatcher;
  std::shared_ptr<WorkerPool> pool;
  std::shared_ptr<InFlight> inflight = std::make_shared<InFlight>();
};

std::mutex g_loopback_mu;
std::map<std::string, std::shared_ptr<LoopbackEndpoint>> g_loopback;

class LoopbackListener final : public Listener {
 public:
  LoopbackListener(BindingConfig cfg, Dispatcher dispatcher, std::shared_ptr<WorkerPool> pool)
      : cfg_(std::move(cfg)) {
    endpoint_ = std::make_shared<LoopbackEndpoint>();
    endpoint_->dispatcher = std::move(dispatcher);
    endpoint_->pool = std::move(pool);
    std::lock_guard lock(g_loopback_mu);
    if (!g_loopback.emplace(cfg_.address, endpoint_).second) {
      throw Error(Errc::BindFailure, "loopback endpoint '" + cfg_.address + "' is already bound");
    }
  }

  ~LoopbackListener() override { stop(); }

  void stop() override {
    std::lock_guard lock(stop_mu_);
    if (stopped_) return;
    {
      std::lock_guard reg(g_loopback_mu);
      auto it = g_loopback.find(cfg_.address);
      if (it != g_loopback.end() && it->second == endpoint_) g_loopback.erase(it);
    }
    endpoint_->inflight->close_and_drain();
    stopped_ = true;
  }

  const BindingConfig& binding() const override { return cfg_; }
  int port() const override { return 0; }

 private:
  BindingConfig cfg_;
  std::shared_ptr<LoopbackEndpoint> endpoint_;
  std::mutex stop_mu_;
  bool stopped_ = false;
};

}  // namespace

std::string_view to_string(TransportKind k) {
  switch (k) {
    case TransportKind::Http: return "http";
    case TransportKind::RawTcp: return "tcp";
    case TransportKind::Loopback: return "loopback";
  }
  return "http";
}

std::string_view to_string(Classification c) {
  switch (c) {
    case Classification::Soap: return "soap";
    case Classification::Web: return "web";
    case Classification::Malformed: return "malformed";
  }
  return "malformed";
}

BindingConfig BindingConfig::parse(std::string_view url) {
  auto bad = [&](const std::string& why) -> Error {
    return Error(Errc::InvalidArgument, "bad binding '" + std::string(url) + "': " + why);
  };
  auto sep = url.find("://");
  if (sep == std::string_view::npos) throw bad("expected scheme://address");
  std::string scheme = lower(url.substr(0, sep));
  std::string_view rest = url.substr(sep + 3);
  while (!rest.empty() && rest.back() == '/') rest.remove_suffix(1);
  BindingConfig cfg;
  if (scheme == "loopback") {
    if (rest.empty()) throw bad("loopback needs a name");
    cfg.kind = TransportKind::Loopback;
    cfg.address = std::string(rest);
    cfg.port = 0;
    return cfg;
  }
  if (scheme == "http") {
    cfg.kind = TransportKind::Http;
  } else if (scheme == "tcp") {
    cfg.kind = TransportKind::RawTcp;
  } else {
    throw bad("unknown scheme '" + scheme + "'");
  }
  auto colon = rest.rfind(':');
  cfg.address = std::string(rest.substr(0, colon));
  if (cfg.address.empty()) throw bad("missing host");
  if (colon != std::string_view::npos) {
    std::string_view p = rest.substr(colon + 1);
    int port = -1;
    auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), port);
    if (ec != std::errc() || ptr != p.data() + p.size() || port < 0 || port > 65535) throw bad("invalid port");
    cfg.port = port;
  }
  return cfg;
}

std::string BindingConfig::url() const {
  if (kind == TransportKind::Loopback) return "loopback://" + address;
  return std::string(to_string(kind)) + "://" + address + ":" + std::to_string(port);
}

bool has_envelope_root(std::string_view s) {
  if (s.substr(0, 3) == "\xEF\xBB\xBF") s.remove_prefix(3);
  for (;;) {
    auto lt = s.find_first_not_of(" \t\r\n");
    if (lt == std::string_view::npos || s[lt] != '<') return false;
    s.remove_prefix(lt);
    if (s.substr(0, 2) == "<?") {
      auto end = s.find("?>");
      if (end == std::string_view::npos) return false;
      s.remove_prefix(end + 2);
    } else if (s.substr(0, 4) == "<!--") {
      auto end = s.find("-->");
      if (end == std::string_view::npos) return false;
      s.remove_prefix(end + 3);
    } else {
      break;
    }
  }
  s.remove_prefix(1);
  std::string_view name = s.substr(0, s.find_first_of(" \t\r\n/>"));
  auto colon = name.find(':');
  std::string_view local = colon == std::string_view::npos ? name : name.substr(colon + 1);
  return local == "Envelope";
}

Classification classify_request(TransportKind kind, std::string_view method, const HeaderMap& headers,
                                std::string_view payload) {
  bool envelope = has_envelope_root(payload);
  if (kind != TransportKind::Http) return envelope ? Classification::Soap : Classification::Malformed;
  if (method == "GET") return Classification::Web;
  if (method != "POST") return Classification::Malformed;
  if (!envelope) return Classification::Web;
  bool xml_type = false;
  if (auto ct = headers.find("content-type"); ct != headers.end()) {
    std::string v = lower(ct->second);
    xml_type = v.find("xml") != std::string::npos;
  }
  bool soap_action = headers.count("soapaction") > 0;
  return (xml_type || soap_action) ? Classification::Soap : Classification::Malformed;
}

WorkerPool::WorkerPool(std::size_t workers) {
  if (workers == 0) throw Error(Errc::InvalidArgument, "worker pool needs at least one worker");
  threads_.reserve(workers);
  for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this] { run(); });
}

WorkerPool::~WorkerPool() { shutdown(); }

bool WorkerPool::submit(std::function<void()> task) {
  {
    std::lock_guard lock(mu_);
    if (stopping_) return false;
    queue_.push_back(std::move(task));
  }
  cv_.notify_one();
  return true;
}

void WorkerPool::shutdown() {
  {
    std::lock_guard lock(mu_);
    if (stopping_ && threads_.empty()) return;
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
  std::lock_guard lock(mu_);
  threads_.clear();
}

void WorkerPool::run() {
  for (;;) {
    std::function<void()> task;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    try {
      task();
    } catch (...) {
    }
  }
}

std::unique_ptr<Listener> start_listener(const BindingConfig& cfg, Dispatcher dispatcher,
                                         std::shared_ptr<WorkerPool> pool) {
  if (!pool) throw Error(Errc::InvalidArgument, "listener needs a worker pool");
  if (cfg.kind == TransportKind::Loopback) {
    return std::make_unique<LoopbackListener>(cfg, std::move(dispatcher), std::move(pool));
  }
  return std::make_unique<SocketListener>(cfg, std::move(dispatcher), std::move(pool));
}

std::string encode_frame(std::string_view payload) {
  if (payload.size() > kMaxPayload) throw Error(Errc::InvalidArgument, "frame payload exceeds 16 MiB");
  auto n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(payload.size() + 4);
  out.push_back(static_cast<char>(n >> 24));
  out.push_back(static_cast<char>(n >> 16));
  out.push_back(static_cast<char>(n >> 8));
  out.push_back(static_cast<char>(n));
  out.append(payload);
  return out;
}

std::optional<std::string> decode_frame(std::string& buffer) {
  if (buffer.size() < 4) return std::nullopt;
  std::uint32_t n = read_be32(buffer);
  if (n > kMaxPayload) throw Error(Errc::InvalidArgument, "frame length exceeds 16 MiB");
  if (buffer.size() < 4 + std::size_t(n)) return std::nullopt;
  std::string payload = buffer.substr(4, n);
  buffer.erase(0, 4 + std::size_t(n));
  return payload;
}

std::string reason_phrase(int status) {
  switch (status) {
    case 200: return "OK";
    case 400: return "Bad Request";
    case 401: return "Unauthorized";
    case 403: return "Forbidden";
    case 404: return "Not Found";
    case 405: return "Method Not Allowed";
    case 411: return "Length Required";
    case 413: return "Payload Too Large";
    case 431: return "Request Header Fields Too Large";
    case 500: return "Internal Server Error";
    case 501: return "Not Implemented";
    case 503: return "Service Unavailable";
    default: return "Status";
  }
}

std::string encode_http_response(const OutboundResponse& r) {
  std::string out = "HTTP/1.1 " + std::to_string(r.status) + " " + reason_phrase(r.status) + "\r\n";
  out += "Content-Type: " + r.content_type + "\r\n";
  out += "Content-Length: " + std::to_string(r.body.size()) + "\r\n";
  out += "Connection: close\r\n\r\n";
  out += r.body;
  return out;
}

std::string tcp_roundtrip(const std::string& host, int port, std::string_view payload,
                          std::chrono::milliseconds timeout) {
  std::string frame = encode_frame(payload);
  sockaddr_in addr = resolve(host, port);
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(Errc::IoFailure, std::string("socket: ") + std::strerror(errno));
  struct Closer {
    int fd;
    ~Closer() { ::close(fd); }
  } closer{fd};
  set_timeouts(fd, timeout);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    throw Error(Errc::IoFailure, "cannot connect to " + host + ":" + std::to_string(port) + ": " +
                                     std::strerror(errno));
  }
  if (!send_all(fd, frame)) throw Error(Errc::PeerGone, "connection lost while sending");
  auto check = [&](ReadStatus st) {
    if (st == ReadStatus::TimedOut) throw Error(Errc::Timeout, "timed out waiting for reply");
    if (st != ReadStatus::Ok) throw Error(Errc::PeerGone, "connection closed before a full reply");
  };
  std::string prefix;
  check(recv_exact(fd, prefix, 4));
  std::uint32_t n = read_be32(prefix);
  if (n > kMaxPayload) throw Error(Errc::IoFailure, "reply frame exceeds 16 MiB");
  std::string body;
  check(recv_exact(fd, body, n));
  return body;
}

OutboundResponse loopback_roundtrip(const std::string& name, std::string_view payload, std::string path) {
  std::shared_ptr<LoopbackEndpoint> ep;
  {
    std::lock_guard lock(g_loopback_mu);
    auto it = g_loopback.find(name);
    if (it == g_loopback.end()) throw Error(Errc::NotFound, "no loopback endpoint '" + name + "'");
    ep = it->second;
  }
  if (payload.size() > kMaxPayload) throw Error(Errc::InvalidArgument, "payload exceeds 16 MiB");
  if (!ep->inflight->enter()) throw Error(Errc::PeerGone, "loopback endpoint '" + name + "' is stopping");

  auto req = std::make_shared<InboundRequest>();
  req->transport = TransportKind::Loopback;
  req->peer = "loopback";
  req->path = std::move(path);
  req->payload = std::string(payload);
  req->classification = classify_request(req->transport, {}, req->headers, req->payload);

  auto promise = std::make_shared<std::promise<OutboundResponse>>();
  auto future = promise->get_future();
  bool queued = ep->pool->submit([ep, req, promise] {
    promise->set_value(dispatch_safely(ep->dispatcher, *req));
    ep->inflight->leave();
  });
  if (!queued) {
    ep->inflight->leave();
    throw Error(Errc::PeerGone, "loopback endpoint '" + name + "' is stopping");
  }
  OutboundResponse resp = future.get();
  // Same framing as rawTcp so both paths share one wire contract.
  std::string wire = encode_frame(resp.body);
  resp.body = *decode_frame(wire);
  return resp;
}

}  // namespace mobilehost

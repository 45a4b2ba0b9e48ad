#pragma once

// Listeners for HTTP/1.1, length-prefixed raw TCP and an in-process
// loopback, all feeding one dispatcher through a bounded worker pool.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "mobilehost/error.hpp"

namespace mobilehost {

enum class TransportKind { Http, RawTcp, Loopback };
std::string_view to_string(TransportKind k);

inline constexpr int kDefaultPort = 5000;
inline constexpr std::size_t kMaxPayload = 16u * 1024u * 1024u;

struct BindingConfig {
  TransportKind kind = TransportKind::Http;
  std::string address = "127.0.0.1";  // loopback: endpoint name
  int port = kDefaultPort;            // 0 asks the OS for a free port

  // "http://host:port", "tcp://host:port" or "loopback://name".
  // Throws Error(InvalidArgument).
  static BindingConfig parse(std::string_view url);
  std::string url() const;
};

enum class Classification { Soap, Web, Malformed };
std::string_view to_string(Classification c);

// Header names are lower-cased.
using HeaderMap = std::map<std::string, std::string>;

struct InboundRequest {
  TransportKind transport = TransportKind::Loopback;
  std::string peer;
  std::string method;  // http only
  std::string path;    // empty for rawTcp and loopback unless the sender named one
  std::string query;
  HeaderMap headers;
  std::string payload;
  Classification classification = Classification::Malformed;
};

// True when the first element of the document is named Envelope (any prefix).
bool has_envelope_root(std::string_view payload);
Classification classify_request(TransportKind kind, std::string_view method, const HeaderMap& headers,
                                std::string_view payload);

struct OutboundResponse {
  int status = 200;
  std::string content_type = "text/xml; charset=utf-8";
  std::string body;
};

using Dispatcher = std::function<OutboundResponse(const InboundRequest&)>;

// Fixed set of threads with an unbounded FIFO in front of them.
class WorkerPool {
 public:
  static constexpr std::size_t kDefaultWorkers = 32;

  explicit WorkerPool(std::size_t workers = kDefaultWorkers);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  // Returns false once shutdown has begun.
  bool submit(std::function<void()> task);
  // Runs every queued task, then joins the threads. Idempotent.
  void shutdown();
  std::size_t size() const { return threads_.size(); }

 private:
  void run();

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> queue_;
  bool stopping_ = false;
  std::vector<std::thread> threads_;
};

class Listener {
 public:
  virtual ~Listener() = default;
  // Refuses new requests, then waits until every accepted one is answered.
  virtual void stop() = 0;
  virtual const BindingConfig& binding() const = 0;
  // Actual port after binding (0 for loopback).
  virtual int port() const = 0;
};

// Throws Error(BindFailure).
std::unique_ptr<Listener> start_listener(const BindingConfig& cfg, Dispatcher dispatcher,
                                         std::shared_ptr<WorkerPool> pool);

// rawTcp framing: [u32 big-endian length][payload].
std::string encode_frame(std::string_view payload);  // InvalidArgument above kMaxPayload
// Consumes one complete frame from the front of buffer; nullopt if incomplete.
// Throws Error(InvalidArgument) when the declared length exceeds kMaxPayload.
std::optional<std::string> decode_frame(std::string& buffer);

std::string reason_phrase(int status);
std::string encode_http_response(const OutboundResponse& r);

// Client side of rawTcp: one frame out, one frame back. Throws
// Error(IoFailure), Error(PeerGone) or Error(Timeout).
std::string tcp_roundtrip(const std::string& host, int port, std::string_view payload,
                          std::chrono::milliseconds timeout = std::chrono::seconds(30));

// Client side of loopback. Throws Error(NotFound) when nothing listens on
// the name, Error(PeerGone) when it is stopping.
OutboundResponse loopback_roundtrip(const std::string& name, std::string_view payload, std::string path = {});

}  // namespace mobilehost

#include <gtest/gtest.h>

#include <atomic>
#include <future>
#include <thread>

#include "generators.hpp"
#include "mobilehost/transport.hpp"

using namespace mobilehost;
namespace mt = mobilehost::testing;

namespace {

const std::string kEnvelope =
    "<SOAP-ENV:Envelope xmlns:SOAP-ENV=\"http://schemas.xmlsoap.org/soap/envelope/\"><SOAP-ENV:Body/>"
    "</SOAP-ENV:Envelope>";

// Echoes the payload with a marker describing how the request arrived.
OutboundResponse echo(const InboundRequest& r) {
  OutboundResponse out;
  out.body = std::string(to_string(r.classification)) + "|" + r.method + "|" + r.path + "|" + r.payload;
  return out;
}

std::shared_ptr<WorkerPool> pool(std::size_t n = 8) { return std::make_shared<WorkerPool>(n); }

BindingConfig any_port(TransportKind kind) {
  BindingConfig cfg;
  cfg.kind = kind;
  cfg.port = 0;
  return cfg;
}

}  // namespace

TEST(Binding, ParsesUrls) {
  auto h = BindingConfig::parse("http://0.0.0.0:5000");
  EXPECT_EQ(h.kind, TransportKind::Http);
  EXPECT_EQ(h.address, "0.0.0.0");
  EXPECT_EQ(h.port, 5000);
  auto t = BindingConfig::parse("tcp://127.0.0.1:0");
  EXPECT_EQ(t.kind, TransportKind::RawTcp);
  EXPECT_EQ(t.port, 0);
  auto l = BindingConfig::parse("loopback://phone");
  EXPECT_EQ(l.kind, TransportKind::Loopback);
  EXPECT_EQ(l.address, "phone");
  EXPECT_EQ(BindingConfig::parse("http://localhost").port, kDefaultPort);
  EXPECT_EQ(BindingConfig::parse(h.url()).url(), h.url());
  for (const char* bad : {"ftp://x:1", "http://h:99999", "http://h:-1", "http://:5", "loopback://", "tcp://h:x"}) {
    EXPECT_THROW(BindingConfig::parse(bad), Error) << bad;
  }
}

TEST(Classify, Rules) {
  HeaderMap xml{{"content-type", "text/xml; charset=utf-8"}};
  HeaderMap action{{"soapaction", "\"\""}};
  HeaderMap plain{{"content-type", "text/plain"}};
  EXPECT_EQ(classify_request(TransportKind::Http, "POST", xml, kEnvelope), Classification::Soap);
  EXPECT_EQ(classify_request(TransportKind::Http, "POST", action, kEnvelope), Classification::Soap);
  EXPECT_EQ(classify_request(TransportKind::Http, "POST", plain, kEnvelope), Classification::Malformed);
  EXPECT_EQ(classify_request(TransportKind::Http, "GET", xml, ""), Classification::Web);
  EXPECT_EQ(classify_request(TransportKind::Http, "POST", xml, "name=value"), Classification::Web);
  EXPECT_EQ(classify_request(TransportKind::Http, "BREW", xml, kEnvelope), Classification::Malformed);
  EXPECT_EQ(classify_request(TransportKind::RawTcp, "", {}, kEnvelope), Classification::Soap);
  EXPECT_EQ(classify_request(TransportKind::RawTcp, "", {}, "hello"), Classification::Malformed);
  EXPECT_EQ(classify_request(TransportKind::Loopback, "", {}, "<?xml version=\"1.0\"?>\n<!-- c --><e:Envelope/>"),
            Classification::Soap);
  EXPECT_FALSE(has_envelope_root("<Envelopes/>"));
  EXPECT_FALSE(has_envelope_root(""));
  EXPECT_TRUE(has_envelope_root("<s:Envelope"));
}

TEST(FrameProperty, EncodeDecodeAcrossSplits) {
  mt::Rng rng(8);
  for (int i = 0; i < 300; ++i) {
    std::string a = mt::random_text(rng, 300), b = mt::random_text(rng, 300);
    std::string wire = encode_frame(a) + encode_frame(b);
    std::size_t cut = rng() % (wire.size() + 1);
    std::string buffer = wire.substr(0, cut);
    std::vector<std::string> got;
    while (auto f = decode_frame(buffer)) got.push_back(*f);
    buffer += wire.substr(cut);
    while (auto f = decode_frame(buffer)) got.push_back(*f);
    ASSERT_EQ(got, (std::vector<std::string>{a, b}));
    ASSERT_TRUE(buffer.empty());
  }
  std::string huge("\x01\x00\x00\x01", 4);
  EXPECT_THROW(decode_frame(huge), Error);
}

TEST(Http, ServesAndReportsRealPort) {
  auto l = start_listener(any_port(TransportKind::Http), echo, pool());
  ASSERT_GT(l->port(), 0);
  std::string resp = mt::raw_exchange(l->port(), mt::soap_post("/svc", kEnvelope));
  EXPECT_EQ(mt::http_status(resp), 200);
  EXPECT_NE(resp.find("Connection: close"), std::string::npos);
  EXPECT_EQ(mt::http_body(resp), "soap|POST|/svc|" + kEnvelope);
  resp = mt::raw_exchange(l->port(), "GET /index.html?x=1 HTTP/1.1\r\nHost: h\r\n\r\n");
  EXPECT_EQ(mt::http_body(resp), "web|GET|/index.html|");
}

TEST(Http, ProtocolErrors) {
  auto l = start_listener(any_port(TransportKind::Http), echo, pool());
  int p = l->port();
  EXPECT_EQ(mt::http_status(mt::raw_exchange(p, "POST / HTTP/1.1\r\nHost: h\r\n\r\n")), 411);
  EXPECT_EQ(mt::http_status(mt::raw_exchange(p, "POST / HTTP/1.1\r\nTransfer-Encoding: chunked\r\n\r\n0\r\n\r\n")), 501);
  EXPECT_EQ(mt::http_status(mt::raw_exchange(p, "POST / HTTP/1.1\r\nContent-Length: 99999999999\r\n\r\n")), 413);
  EXPECT_EQ(mt::http_status(mt::raw_exchange(p, "POST / HTTP/1.1\r\nContent-Length: 16777217\r\n\r\n")), 413);
  EXPECT_EQ(mt::http_status(mt::raw_exchange(p, "garbage\r\n\r\n")), 400);
  EXPECT_EQ(mt::http_status(mt::raw_exchange(p, "GET / HTTP/1.1\r\nX: " + std::string(70000, 'a') + "\r\n\r\n")), 431);
}

TEST(RawTcp, RoundTrip) {
  auto l = start_listener(any_port(TransportKind::RawTcp), echo, pool());
  EXPECT_EQ(tcp_roundtrip("127.0.0.1", l->port(), kEnvelope), "soap|||" + kEnvelope);
  EXPECT_EQ(tcp_roundtrip("127.0.0.1", l->port(), "junk"), "malformed|||junk");
}

TEST(Loopback, RoundTripAndNameLifecycle) {
  BindingConfig cfg = BindingConfig::parse("loopback://unit-phone");
  {
    auto l = start_listener(cfg, echo, pool());
    auto r = loopback_roundtrip("unit-phone", kEnvelope, "/p");
    EXPECT_EQ(r.body, "soap||/p|" + kEnvelope);
    EXPECT_THROW(start_listener(cfg, echo, pool()), Error);
    l->stop();
    EXPECT_THROW(loopback_roundtrip("unit-phone", kEnvelope), Error);
  }
  auto again = start_listener(cfg, echo, pool());
  EXPECT_NO_THROW(loopback_roundtrip("unit-phone", kEnvelope));
}

TEST(Listener, SecondBindOnSamePortFails) {
  auto l = start_listener(any_port(TransportKind::Http), echo, pool());
  BindingConfig cfg = any_port(TransportKind::RawTcp);
  cfg.port = l->port();
  try {
    start_listener(cfg, echo, pool());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BindFailure);
  }
}

TEST(Listener, FiftyConcurrentRequestsAllAnswered) {
  auto l = start_listener(any_port(TransportKind::Http), echo, pool(8));
  std::vector<std::future<std::string>> futures;
  for (int i = 0; i < 50; ++i) {
    futures.push_back(std::async(std::launch::async, [&, i] {
      return mt::raw_exchange(l->port(), mt::soap_post("/c" + std::to_string(i), kEnvelope));
    }));
  }
  for (int i = 0; i < 50; ++i) {
    std::string resp = futures[i].get();
    EXPECT_EQ(mt::http_status(resp), 200);
    EXPECT_EQ(mt::http_body(resp), "soap|POST|/c" + std::to_string(i) + "|" + kEnvelope);
  }
}

TEST(Listener, StopDrainsInFlightRequests) {
  std::atomic<int> entered{0};
  Dispatcher slow = [&](const InboundRequest& r) {
    ++entered;
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    return echo(r);
  };
  auto l = start_listener(any_port(TransportKind::RawTcp), slow, pool());
  int port = l->port();
  auto pending = std::async(std::launch::async, [&] { return tcp_roundtrip("127.0.0.1", port, kEnvelope); });
  while (entered == 0) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  l->stop();
  EXPECT_EQ(pending.get(), "soap|||" + kEnvelope);
  EXPECT_THROW(tcp_roundtrip("127.0.0.1", port, kEnvelope, std::chrono::milliseconds(500)), Error);
}

TEST(Listener, DispatcherExceptionsStayIsolated) {
  Dispatcher flaky = [](const InboundRequest& r) -> OutboundResponse {
    if (r.path == "/boom") throw std::runtime_error("boom");
    return echo(r);
  };
  auto l = start_listener(any_port(TransportKind::Http), flaky, pool(2));
  EXPECT_EQ(mt::http_status(mt::raw_exchange(l->port(), mt::soap_post("/boom", kEnvelope))), 500);
  EXPECT_EQ(mt::http_status(mt::raw_exchange(l->port(), mt::soap_post("/ok", kEnvelope))), 200);
}

TEST(WorkerPool, RunsQueuedTasksBeforeShutdown) {
  WorkerPool p(2);
  std::atomic<int> done{0};
  for (int i = 0; i < 100; ++i) p.submit([&] { ++done; });
  p.shutdown();
  EXPECT_EQ(done, 100);
  EXPECT_FALSE(p.submit([] {}));
  EXPECT_THROW(WorkerPool(0), Error);
}

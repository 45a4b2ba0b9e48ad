// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <future>
#include <iostream>
#include <regex>
#include <sstream>
#include <thread>

#include "generators.hpp"
#include "mobilehost/client.hpp"
#include "mobilehost/host.hpp"
#include "mobilehost/notes.hpp"
#include "mobilehost/wsdl.hpp"

using namespace mobilehost;
namespace mt = mobilehost::testing;
using Clock = std::chrono::steady_clock;

namespace {

const std::string kFig14Result =
    "#A001;D002;LACKS;;0#A001;D002;FINAL TEST;;0#A001;D002;REPLACEMENT;;0#A001;D002;NOTE 3;;98"
    "#A001;D002;NOTE 2;;95#A001;D002;NOTE 1;;100#";

struct Report {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string result_string(const std::string& body) {
  SoapEnvelope env = parse_envelope(body);
  if (!env.is_response()) return "<not a response>";
  return std::get<SoapResponseBody>(env.body).result.lexical();
}

InboundRequest soap_request(std::string payload, std::string path) {
  InboundRequest r;
  r.transport = TransportKind::Http;
  r.method = "POST";
  r.path = std::move(path);
  r.headers["content-type"] = "text/xml; charset=utf-8";
  r.payload = std::move(payload);
  r.classification = classify_request(r.transport, r.method, r.headers, r.payload);
  return r;
}

// A running `mobilehost serve` child process.
class ServeProcess {
 public:
  explicit ServeProcess(const std::vector<std::string>& args) {
    int fds[2];
    if (::pipe(fds) != 0) throw std::runtime_error("pipe");
    pid_ = ::fork();
    if (pid_ < 0) throw std::runtime_error("fork");
    if (pid_ == 0) {
      ::dup2(fds[1], STDOUT_FILENO);
      ::close(fds[0]);
      ::close(fds[1]);
      std::vector<char*> argv;
      std::string path = MOBILEHOST_CLI_PATH;
      argv.push_back(path.data());
      std::vector<std::string> copy = args;
      for (auto& a : copy) argv.push_back(a.data());
      argv.push_back(nullptr);
      ::execv(path.c_str(), argv.data());
      ::_exit(127);
    }
    ::close(fds[1]);
    out_fd_ = fds[0];
  }

  ~ServeProcess() {
    stop();
    ::close(out_fd_);
  }

  // Reads stdout until a line matches `re`; returns the first capture.
  std::string wait_for(const std::regex& re, std::chrono::seconds limit) {
    auto deadline = Clock::now() + limit;
    for (;;) {
      for (auto nl = buffer_.find('\n'); nl != std::string::npos; nl = buffer_.find('\n')) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        std::smatch m;
        if (std::regex_search(line, m, re)) return m.size() > 1 ? m[1].str() : line;
      }
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
      if (left <= 0) throw std::runtime_error("timed out waiting for serve output");
      pollfd p{out_fd_, POLLIN, 0};
      if (::poll(&p, 1, static_cast<int>(left)) <= 0) continue;
      char buf[512];
      ssize_t n = ::read(out_fd_, buf, sizeof buf);
      if (n <= 0) throw std::runtime_error("serve exited early");
      buffer_.append(buf, static_cast<std::size_t>(n));
    }
  }

  int stop() {
    if (pid_ <= 0) return status_;
    ::kill(pid_, SIGTERM);
    int st = 0;
    ::waitpid(pid_, &st, 0);
    pid_ = -1;
    status_ = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return status_;
  }

 private:
  pid_t pid_ = -1;
  int out_fd_ = -1;
  int status_ = -1;
  std::string buffer_;
};

Report case_study() {
  auto dir = mt::temp_dir("accept-1");
  auto spawned = Clock::now();
  ServeProcess serve({"serve", "--demo-notes", "--bind", "http://127.0.0.1:0", "--data-dir", dir.string()});
  std::string port = serve.wait_for(std::regex("listening on http://127\\.0\\.0\\.1:(\\d+)"), std::chrono::seconds(20));

  std::string fig13 = mt::read_file(mt::test_data("fig13_request.xml"));
  auto started = Clock::now();
  std::string raw = mt::raw_exchange(std::stoi(port), mt::soap_post(std::string(kNotesPath), fig13));
  double elapsed = seconds_since(started);
  double end_to_end = seconds_since(spawned);
  int exit_code = serve.stop();

  std::string body = mt::http_body(raw);
  bool canonical = canonicalize(body) == canonicalize(mt::read_file(mt::test_data("fig14_response.xml")));
  bool exact = result_string(body) == kFig14Result;
  bool status = mt::http_status(raw) == 200;
  bool fast = end_to_end < 1.0;
  return {canonical && exact && status && fast && exit_code == 0,
          "status=" + std::to_string(mt::http_status(raw)) + " canonical=" + (canonical ? "equal" : "differs") +
              " result=" + (exact ? "exact" : "differs") + " request=" + fmt(elapsed) + "s end-to-end=" + fmt(end_to_end) + "s serve_exit=" +
              std::to_string(exit_code)};
}

Report codec_round_trip() {
  mt::Rng rng(20080813);
  int failures = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    SoapEnvelope e = mt::random_envelope(rng);
    try {
      if (!(parse_envelope(serialize_envelope(e)) == e)) ++failures;
    } catch (const std::exception&) {
      ++failures;
    }
  }
  return {failures == 0, std::to_string(n) + " envelopes, " + std::to_string(failures) + " failures"};
}

Report wsdl_oracle() {
  mt::Rng rng(5005);
  int failures = 0;
  const int n = 250;
  for (int i = 0; i < n; ++i) {
    ServiceDescriptor d = mt::random_descriptor(rng);
    ServiceDescriptor expected = d;
    expected.security_enabled = false;
    expected.exclusive_execution = false;
    try {
      if (!(parse_wsdl(generate_wsdl(d, "http://127.0.0.1:5000" + d.endpoint_path).xml_text) == expected)) ++failures;
    } catch (const std::exception&) {
      ++failures;
    }
  }
  return {failures == 0, std::to_string(n) + " descriptors, " + std::to_string(failures) + " failures"};
}

Report validation_taxonomy() {
  HostConfig cfg;
  cfg.data_dir = mt::temp_dir("accept-4");
  Host host(cfg);
  ServiceDescriptor d;
  d.service_name = "Calc";
  d.namespace_uri = "urn:calc";
  d.endpoint_path = "/calc";
  d.response_namespace_uri = "urn:calc";
  d.methods = {{"add", {{"a", XsdType::Int}, {"b", XsdType::Int}}, XsdType::Int}, {"explode", {}, XsdType::Int}};
  host.create_service(d, std::make_shared<FunctionHandler>([](std::string_view m, std::span<const TypedValue> a) {
                        if (m == "explode") throw std::runtime_error("deliberate failure");
                        return TypedValue::integer(a[0].as_int() + a[1].as_int());
                      }));
  auto call = [](std::string op, std::vector<Parameter> params) {
    SoapCall c;
    c.operation = {std::move(op), "urn:calc"};
    c.params = std::move(params);
    SoapEnvelope env;
    env.body = c;
    return serialize_envelope(env);
  };
  auto i = [](int v) { return TypedValue::integer(v); };
  struct Case {
    std::string name, payload;
    FaultCode expected;
  };
  std::vector<Case> cases = {
      {"unknown method", call("mul", {{"a", i(1)}, {"b", i(2)}}), FaultCode::Client},
      {"arity-1", call("add", {{"a", i(1)}}), FaultCode::Client},
      {"arity+1", call("add", {{"a", i(1)}, {"b", i(2)}, {"c", i(3)}}), FaultCode::Client},
      {"wrong type", call("add", {{"a", i(1)}, {"b", TypedValue::string("2")}}), FaultCode::Client},
      {"wrong name", call("add", {{"a", i(1)}, {"x", i(2)}}), FaultCode::Client},
      {"handler exception", call("explode", {}), FaultCode::Server},
  };
  int ok = 0;
  std::string misses;
  for (const auto& c : cases) {
    auto resp = host.handle_request(soap_request(c.payload, "/calc"));
    bool hit = false;
    try {
      SoapEnvelope env = parse_envelope(resp.body);
      hit = resp.status == 500 && env.is_fault() && std::get<SoapFault>(env.body).code == c.expected;
    } catch (const std::exception&) {
    }
    if (hit) {
      ++ok;
    } else {
      misses += " miss:" + c.name;
    }
  }
  return {ok == 6, std::to_string(ok) + "/6 exact" + misses};
}

Report security_suite() {
  mt::Rng rng(77);
  KeyPair key = generate_keypair(kDefaultKeyBits);
  int honest = 0, tamper_accepts = 0, round_trips = 0;
  for (int t = 0; t < 500; ++t) {
    std::string msg = mt::random_text(rng, 400) + "#" + std::to_string(t);
    SignatureBlock sig = sign_message(msg, key);
    if (verify_signature(msg, sig, key.public_key())) ++honest;
    std::string tampered = msg;
    tampered[rng() % tampered.size()] ^= static_cast<char>(1 + rng() % 255);
    if (verify_signature(tampered, sig, key.public_key())) ++tamper_accepts;
  }
  for (int t = 0; t < 1000; ++t) {
    std::size_t len = t == 0 ? 65536 : 1 + rng() % 65536;
    std::string msg(len, '\0');
    for (auto& c : msg) c = static_cast<char>(rng());
    if (decrypt_message(encrypt_message(msg, key.public_key()), key) == msg) ++round_trips;
  }
  Certificate cert = issue_certificate(key, "MobileHost/Acceptance");
  std::string mismatch =
      mt::match_certificate_template(mt::read_file(mt::test_data("certificate_template.txt")), render_certificate_text(cert));
  bool ten_days = cert.not_after - cert.not_before == std::chrono::days(10);
  bool pass = honest == 500 && tamper_accepts == 0 && round_trips == 1000 && mismatch.empty() && ten_days;
  return {pass, "honest " + std::to_string(honest) + "/500, tamper accepts " + std::to_string(tamper_accepts) +
                    "/500, round trips " + std::to_string(round_trips) + "/1000, certificate " +
                    (mismatch.empty() ? "matches template" : "mismatch: " + mismatch) +
                    (ten_days ? ", validity 10 days" : ", validity wrong")};
}

Report concurrency() {
  HostConfig cfg;
  cfg.data_dir = mt::temp_dir("accept-6");
  cfg.bindings = {BindingConfig::parse("http://127.0.0.1:0")};
  Host host(cfg);
  host.create_service(notes_descriptor(), nullptr, "notes");
  ServiceDescriptor slow;
  slow.service_name = "Slow";
  slow.namespace_uri = "urn:slow";
  slow.endpoint_path = "/slow";
  slow.response_namespace_uri = "urn:slow";
  slow.methods = {{"wait", {}, XsdType::String}};
  const auto slow_delay = std::chrono::milliseconds(3000);
  host.create_service(slow, std::make_shared<FunctionHandler>([&](std::string_view, std::span<const TypedValue>) {
                        std::this_thread::sleep_for(slow_delay);
                        return TypedValue::string("done");
                      }));
  host.start();
  int port = host.port(0);
  std::string fig13 = mt::read_file(mt::test_data("fig13_request.xml"));
  SoapCall wait_call;
  wait_call.operation = {"wait", "urn:slow"};
  std::string slow_req = build_request(wait_call, {});

  auto started = Clock::now();
  std::vector<std::future<bool>> slow_calls;
  for (int i = 0; i < 4; ++i) {
    slow_calls.push_back(std::async(std::launch::async, [&] {
      return result_string(mt::http_body(mt::raw_exchange(port, mt::soap_post("/slow", slow_req)))) == "done";
    }));
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  std::vector<std::future<std::pair<bool, double>>> demo_calls;
  for (int i = 0; i < 50; ++i) {
    demo_calls.push_back(std::async(std::launch::async, [&] {
      auto t = Clock::now();
      std::string raw = mt::raw_exchange(port, mt::soap_post(std::string(kNotesPath), fig13));
      return std::make_pair(result_string(mt::http_body(raw)) == kFig14Result, seconds_since(t));
    }));
  }
  int correct = 0;
  double worst = 0;
  for (auto& f : demo_calls) {
    auto [ok, latency] = f.get();
    correct += ok ? 1 : 0;
    worst = std::max(worst, latency);
  }
  int slow_ok = 0;
  for (auto& f : slow_calls) slow_ok += f.get() ? 1 : 0;
  double total = seconds_since(started);
  host.shutdown();
  // The slow handler holds 4 of 32 workers, so demo calls should finish long
  // before any slow call does.
  bool unaffected = worst < std::chrono::duration<double>(slow_delay).count() / 2;
  return {correct == 50 && slow_ok == 4 && unaffected && total < 10.0,
          std::to_string(correct) + "/50 correct, worst demo latency " + fmt(worst) + "s while slow calls take " +
              fmt(std::chrono::duration<double>(slow_delay).count()) + "s, slow " + std::to_string(slow_ok) +
              "/4, total " + fmt(total) + "s"};
}

Report runtime_deployment() {
  HostConfig cfg;
  cfg.data_dir = mt::temp_dir("accept-7");
  cfg.bindings = {BindingConfig::parse("http://127.0.0.1:0")};
  Host host(cfg);
  host.create_service(notes_descriptor(), nullptr, "notes");
  host.start();
  int port = host.port(0);
  std::string fig13 = mt::read_file(mt::test_data("fig13_request.xml"));

  std::atomic<bool> stop{false};
  std::atomic<int> sent{0}, dropped{0};
  std::vector<std::thread> load;
  for (int t = 0; t < 8; ++t) {
    load.emplace_back([&] {
      while (!stop) {
        ++sent;
        try {
          std::string raw = mt::raw_exchange(port, mt::soap_post(std::string(kNotesPath), fig13));
          if (result_string(mt::http_body(raw)) != kFig14Result) ++dropped;
        } catch (const std::exception&) {
          ++dropped;
        }
      }
    });
  }
  while (sent < 40) std::this_thread::sleep_for(std::chrono::milliseconds(5));

  ServiceDescriptor fresh;
  fresh.service_name = "Fresh";
  fresh.namespace_uri = "urn:fresh";
  fresh.endpoint_path = "/fresh";
  fresh.response_namespace_uri = "urn:fresh";
  fresh.methods = {{"hello", {{"who", XsdType::String}}, XsdType::String}};
  host.create_service(fresh, std::make_shared<FunctionHandler>([](std::string_view, std::span<const TypedValue> a) {
                        return TypedValue::string("hello " + a[0].as_string());
                      }));
  SoapCall hello;
  hello.operation = {"hello", "urn:fresh"};
  hello.params = {{"who", TypedValue::string("world")}};
  std::string first;
  try {
    first = result_string(mt::http_body(mt::raw_exchange(port, mt::soap_post("/fresh", build_request(hello, {})))));
  } catch (const std::exception& e) {
    first = e.what();
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  stop = true;
  for (auto& t : load) t.join();
  host.shutdown();
  return {first == "hello world" && dropped == 0,
          "first request to new service: " + (first == "hello world" ? std::string("ok") : "'" + first + "'") +
              ", background requests " + std::to_string(sent.load()) + ", dropped " + std::to_string(dropped.load())};
}

Report persistence() {
  HostConfig cfg;
  cfg.data_dir = mt::temp_dir("accept-8");
  const std::string sentinel = "Sentinel-Pa55-8f3a";
  std::vector<ServiceDescriptor> descs = {notes_descriptor()};
  for (const char* name : {"EchoOne", "EchoTwo"}) {
    ServiceDescriptor d;
    d.service_name = name;
    d.namespace_uri = std::string("urn:") + name;
    d.endpoint_path = std::string("/") + name;
    d.response_namespace_uri = d.namespace_uri;
    d.security_enabled = std::string(name) == "EchoTwo";
    d.methods = {{"say", {{"text", XsdType::String}}, XsdType::String}};
    descs.push_back(d);
  }
  std::unique_ptr<Registry> before;
  {
    Host host(cfg);
    host.create_service(descs[0], nullptr, "notes");
    host.create_service(descs[1], nullptr, "echo");
    host.create_service(descs[2], nullptr, "echo");
    host.add_user(UserRecord::create("aluno1", sentinel, "dev-1", {"CadastroEscolar"}));
    host.add_user(UserRecord::create("aluno2", sentinel, "dev-2", {"*"}));
    host.shutdown();
    before = Registry::load_snapshot(cfg.data_dir);
    if (!before->same_state(host.registry())) return {false, "snapshot differs from live registry"};
  }
  cfg.bindings = {BindingConfig::parse("http://127.0.0.1:0")};
  Host host(cfg);
  bool same = host.registry().same_state(*before);
  host.start();
  int port = host.port(0);
  int live = 0;
  std::string fig13 = mt::read_file(mt::test_data("fig13_request.xml"));
  if (result_string(mt::http_body(mt::raw_exchange(port, mt::soap_post(std::string(kNotesPath), fig13)))) ==
      kFig14Result) {
    ++live;
  }
  for (std::size_t i = 1; i < descs.size(); ++i) {
    SoapCall say;
    say.operation = {"say", descs[i].namespace_uri};
    say.params = {{"text", TypedValue::string("ping")}};
    std::string raw = mt::raw_exchange(port, mt::soap_post(descs[i].endpoint_path, build_request(say, {})));
    if (mt::http_status(raw) == 200 && result_string(mt::http_body(raw)) == "ping") ++live;
  }
  host.shutdown();
  bool leaked = false;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(cfg.data_dir)) {
    if (entry.is_regular_file() && mt::read_file(entry.path()).find(sentinel) != std::string::npos) leaked = true;
  }
  return {same && live == 3 && !leaked, std::string("registry ") + (same ? "identical" : "differs") + ", routes live " +
                                            std::to_string(live) + "/3, plaintext password " +
                                            (leaked ? "FOUND" : "absent")};
}

std::string mutate(mt::Rng& rng, std::string s) {
  int edits = 1 + static_cast<int>(rng() % 4);
  for (int e = 0; e < edits; ++e) {
    std::size_t pos = s.empty() ? 0 : rng() % s.size();
    switch (rng() % 6) {
      case 0:
        if (!s.empty()) s[pos] = static_cast<char>(rng());
        break;
      case 1:
        s.resize(pos);
        break;
      case 2:
        s.insert(pos, 1, "<>&\"'/:= \0\xff"[rng() % 11]);
        break;
      case 3:
        if (!s.empty()) s.erase(pos, 1 + rng() % 16);
        break;
      case 4: {
        std::size_t from = s.empty() ? 0 : rng() % s.size();
        s.insert(pos, s.substr(from, rng() % 64));
        break;
      }
      default:
        s.insert(pos, mt::random_text(rng, 20));
    }
  }
  return s;
}

Report robustness() {
  HostConfig cfg;
  cfg.data_dir = mt::temp_dir("accept-9");
  Host host(cfg);
  host.create_service(notes_descriptor(), nullptr, "notes");
  ServiceDescriptor secure = notes_descriptor();
  secure.service_name = "SecureNotes";
  secure.endpoint_path = "/secure";
  secure.namespace_uri = "urn:secure";
  secure.security_enabled = true;
  host.create_service(secure, nullptr, "notes");

  std::vector<std::string> seeds = {mt::read_file(mt::test_data("fig13_request.xml"))};
  SoapCall c = build_call(secure, "obterNotas", {"A001", "D002"});
  InvokeOptions enc;
  enc.encrypt_for = host.certificate("SecureNotes")->public_key;
  enc.service_name = "SecureNotes";
  enc.sign = true;
  enc.auth = AuthHeader{"aluno1", password_proof("x"), "dev"};
  seeds.push_back(build_request(c, enc));
  InvokeOptions sig;
  sig.sign = true;
  seeds.push_back(build_request(c, sig));

  mt::Rng rng(9);
  const int n = 10000;
  int answered = 0, crashes = 0, hangs = 0;
  double slowest = 0;
  for (int i = 0; i < n; ++i) {
    std::string payload;
    switch (i % 4) {
      case 0: payload = mutate(rng, seeds[rng() % seeds.size()]); break;
      case 1: payload = mutate(rng, serialize_envelope(mt::random_envelope(rng))); break;
      case 2: payload = serialize_envelope(mt::random_envelope(rng)); break;
      default: {
        std::size_t len = rng() % 512;
        payload.resize(len);
        for (auto& ch : payload) ch = static_cast<char>(rng());
      }
    }
    InboundRequest req;
    req.payload = payload;
    switch (rng() % 3) {
      case 0:
        req = soap_request(payload, rng() % 2 ? std::string(kNotesPath) : "/secure");
        break;
      case 1:
        req.transport = TransportKind::RawTcp;
        req.classification = classify_request(req.transport, {}, {}, payload);
        break;
      default:
        req.transport = TransportKind::Http;
        req.method = rng() % 2 ? "POST" : "GET";
        req.path = "/" + mt::random_ncname(rng);
        req.classification = classify_request(req.transport, req.method, {}, payload);
    }
    auto t = Clock::now();
    auto fut = std::async(std::launch::async, [&host, req] {
      try {
        return host.handle_request(req).status;
      } catch (...) {
        return -1;
      }
    });
    if (fut.wait_for(std::chrono::seconds(2)) != std::future_status::ready) {
      ++hangs;
      fut.wait();
      continue;
    }
    slowest = std::max(slowest, seconds_since(t));
    int status = fut.get();
    if (status >= 200 && status < 600) {
      ++answered;
    } else {
      ++crashes;
    }
  }
  return {answered == n && crashes == 0 && hangs == 0,
          std::to_string(n) + " cases, " + std::to_string(answered) + " answered, " + std::to_string(crashes) +
              " crashes, " + std::to_string(hangs) + " hangs, slowest " + fmt(slowest) + "s"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Report()> run;
  };
  std::vector<Criterion> criteria = {
      {1, "case-study reproduction", case_study},   {2, "codec round-trip", codec_round_trip},
      {3, "WSDL oracle", wsdl_oracle},              {4, "validation taxonomy", validation_taxonomy},
      {5, "security suite", security_suite},        {6, "concurrency", concurrency},
      {7, "runtime deployment", runtime_deployment}, {8, "persistence", persistence},
      {9, "robustness fuzz", robustness},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Report v;
    auto started = Clock::now();
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::cout << "criterion " << c.id << " " << (v.pass ? "PASS" : "FAIL") << "  " << c.name << ": " << v.detail
              << " [" << fmt(seconds_since(started)) << "s]" << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}

#include "mobilehost/host.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "mobilehost/headers.hpp"
#include "mobilehost/notes.hpp"
#include "mobilehost/wsdl.hpp"

namespace mobilehost {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kXmlContentType = "text/xml; charset=utf-8";

OutboundResponse plain(int status, std::string body) {
  return OutboundResponse{status, "text/plain; charset=utf-8", std::move(body)};
}

TypedValue zero_value(XsdType t) {
  switch (t) {
    case XsdType::String: return TypedValue::string("");
    case XsdType::Int: return TypedValue::integer(0);
    case XsdType::Double: return TypedValue::number(0.0);
    case XsdType::Boolean: return TypedValue::boolean(false);
  }
  return TypedValue::string("");
}

class EchoHandler : public ServiceHandler {
 public:
  explicit EchoHandler(ServiceDescriptor desc) : desc_(std::move(desc)) {}

  TypedValue execute_method(std::string_view method, std::span<const TypedValue> args) override {
    const auto* sig = desc_.find_method(method);
    if (!sig) throw std::invalid_argument("no method " + std::string(method));
    if (!args.empty() && args.front().type() == sig->return_type) return args.front();
    return zero_value(sig->return_type);
  }

 private:
  ServiceDescriptor desc_;
};

std::string content_type_for(const fs::path& p) {
  auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".xml" || ext == ".wsdl") return std::string(kXmlContentType);
  if (ext == ".css") return "text/css";
  if (ext == ".js") return "application/javascript";
  if (ext == ".txt") return "text/plain; charset=utf-8";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

HostConfig normalize(HostConfig cfg) {
  if (cfg.worker_pool_size < 1) throw Error(Errc::InvalidArgument, "worker pool size must be at least 1");
  if (cfg.wsdl_dir.empty()) cfg.wsdl_dir = cfg.data_dir / "wsdl";
  if (fs::weakly_canonical(cfg.wsdl_dir) == fs::weakly_canonical(cfg.data_dir)) {
    throw Error(Errc::InvalidArgument, "data and WSDL directories must differ");
  }
  if (cfg.advertised_base.empty()) {
    cfg.advertised_base = "http://localhost:" + std::to_string(kDefaultPort);
    for (const auto& b : cfg.bindings) {
      if (b.kind == TransportKind::Http && b.port != 0) {
        std::string host = b.address == "0.0.0.0" ? "localhost" : b.address;
        cfg.advertised_base = "http://" + host + ":" + std::to_string(b.port);
        break;
      }
    }
  }
  while (!cfg.advertised_base.empty() && cfg.advertised_base.back() == '/') cfg.advertised_base.pop_back();
  std::error_code ec;
  fs::create_directories(cfg.data_dir, ec);
  if (ec) throw Error(Errc::IoFailure, "cannot create " + cfg.data_dir.string() + ": " + ec.message());
  return cfg;
}

}  // namespace

std::shared_ptr<ServiceHandler> make_builtin_handler(std::string_view handler_id, const ServiceDescriptor& desc) {
  if (handler_id == "notes") return std::make_shared<NotesHandler>(default_notes_seed());
  if (handler_id == "echo") return std::make_shared<EchoHandler>(desc);
  throw Error(Errc::InvalidArgument, "unknown handler '" + std::string(handler_id) + "'");
}

struct Host::Trace {
  std::string service;
  std::string method;
  mobilehost::Outcome outcome = mobilehost::Outcome::ClientFault;
};

Host::Host(HostConfig cfg)
    : cfg_(normalize(std::move(cfg))),
      registry_(Registry::load_snapshot(cfg_.data_dir)),
      log_(cfg_.log_capacity),
      keystore_(cfg_.data_dir / "keys") {
  for (const auto& rec : registry_->services()) {
    if (rec->descriptor.security_enabled) load_keys(*rec);
    if (!rec->handler_id.empty()) {
      handlers_[rec->descriptor.service_name] = make_builtin_handler(rec->handler_id, rec->descriptor);
    }
  }
}

Host::~Host() {
  try {
    shutdown();
  } catch (...) {
  }
}

void Host::load_keys(const ServiceRecord& rec) {
  const std::string& id = rec.key_set_id.value_or(rec.descriptor.service_name);
  auto [key, cert] = keystore_.load(id);
  auto keys = std::make_shared<Keys>(Keys{std::move(key), cert, render_certificate_text(cert)});
  std::lock_guard lock(state_mu_);
  keys_[rec.descriptor.service_name] = std::move(keys);
}

std::string Host::endpoint_url(const ServiceDescriptor& desc) const { return cfg_.advertised_base + desc.endpoint_path; }

std::shared_ptr<const ServiceRecord> Host::create_service(const ServiceDescriptor& desc,
                                                          std::shared_ptr<ServiceHandler> handler,
                                                          std::string handler_id) {
  std::lock_guard create_lock(create_mu_);
  desc.validate();
  const std::string& name = desc.service_name;
  if (auto existing = registry_->find_by_name(name)) {
    if (descriptor_fingerprint(existing->descriptor) != descriptor_fingerprint(desc)) {
      throw Error(Errc::DuplicateService, "service '" + name + "' already exists with a different description");
    }
    if (handler) bind_handler(name, std::move(handler));
    return existing;
  }
  bool path_taken = true;
  try {
    registry_->lookup_by_path(desc.endpoint_path);
  } catch (const Error&) {
    path_taken = false;
  }
  if (path_taken) throw Error(Errc::PathConflict, "endpoint path '" + desc.endpoint_path + "' is already in use");
  if (!handler && !handler_id.empty()) handler = make_builtin_handler(handler_id, desc);

  ServiceRecord rec;
  rec.descriptor = desc;
  rec.created_at = now_micros();
  rec.handler_id = std::move(handler_id);
  std::shared_ptr<const Keys> keys;
  if (desc.security_enabled) {
    rec.key_set_id = name;
    if (keystore_.exists(name)) {
      auto [key, cert] = keystore_.load(name);
      keys = std::make_shared<Keys>(Keys{std::move(key), cert, render_certificate_text(cert)});
    } else {
      KeyPair key = generate_keypair(cfg_.key_bits);
      Certificate cert = issue_certificate(key, "MobileHost/" + name);
      keystore_.save(name, key, cert);
      keys = std::make_shared<Keys>(Keys{std::move(key), cert, render_certificate_text(cert)});
    }
  }
  rec.wsdl = generate_wsdl(desc, endpoint_url(desc));
  store_wsdl(rec.wsdl, cfg_.wsdl_dir);

  {
    std::lock_guard lock(state_mu_);
    if (handler) handlers_[name] = handler;
    if (keys) keys_[name] = keys;
  }
  try {
    registry_->register_service(rec);
  } catch (...) {
    std::lock_guard lock(state_mu_);
    handlers_.erase(name);
    keys_.erase(name);
    throw;
  }
  return registry_->lookup_by_name(name);
}

void Host::bind_handler(const std::string& service, std::shared_ptr<ServiceHandler> handler) {
  registry_->lookup_by_name(service);
  std::lock_guard lock(state_mu_);
  handlers_[service] = std::move(handler);
}

// Handlers and keys stay cached so requests already routed to the service
// can finish; only new lookups fail.
void Host::remove_service(const std::string& name) { registry_->remove_service(name); }

std::shared_ptr<const Host::Keys> Host::keys_for(const std::string& service) const {
  std::lock_guard lock(state_mu_);
  auto it = keys_.find(service);
  return it == keys_.end() ? nullptr : it->second;
}

std::shared_ptr<ServiceHandler> Host::handler_for(const std::string& service) const {
  std::lock_guard lock(state_mu_);
  auto it = handlers_.find(service);
  return it == handlers_.end() ? nullptr : it->second;
}

std::shared_ptr<std::mutex> Host::exclusive_lock_for(const std::string& service) {
  std::lock_guard lock(state_mu_);
  auto& m = exclusive_[service];
  if (!m) m = std::make_shared<std::mutex>();
  return m;
}

std::optional<Certificate> Host::certificate(const std::string& service) const {
  auto keys = keys_for(service);
  if (!keys) return std::nullopt;
  return keys->cert;
}

OutboundResponse Host::handle_request(const InboundRequest& req) noexcept {
  try {
    switch (req.classification) {
      case Classification::Web:
        return handle_web(req);
      case Classification::Malformed:
        return plain(400, "malformed request\n");
      case Classification::Soap:
        break;
    }
    auto started = std::chrono::steady_clock::now();
    Trace trace;
    OutboundResponse resp;
    try {
      resp = handle_soap(req, trace);
    } catch (const std::exception& e) {
      trace.outcome = mobilehost::Outcome::ServerFault;
      resp = OutboundResponse{500, std::string(kXmlContentType),
                              serialize_envelope(make_fault(FaultCode::Server, "internal error"))};
    }
    auto elapsed = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - started);
    log_.append({now_micros(), trace.service, trace.method, elapsed.count(), trace.outcome});
    return resp;
  } catch (...) {
    return plain(500, "internal error\n");
  }
}

OutboundResponse Host::handle_soap(const InboundRequest& req, Trace& trace) {
  std::shared_ptr<const Keys> keys;
  auto fault = [&](FaultCode code, std::string message, mobilehost::Outcome outcome) {
    trace.outcome = outcome;
    SoapEnvelope env = make_fault(code, std::move(message));
    std::string body = keys ? serialize_signed(std::move(env), keys->key) : serialize_envelope(env);
    return OutboundResponse{500, std::string(kXmlContentType), std::move(body)};
  };
  auto client_fault = [&](std::string message) {
    return fault(FaultCode::Client, std::move(message), mobilehost::Outcome::ClientFault);
  };

  SoapEnvelope env;
  KnownHeaders headers;
  try {
    env = parse_envelope(req.payload);
    headers = read_headers(req.payload);
  } catch (const Error& e) {
    if (e.code() == Errc::VersionMismatch) {
      return fault(FaultCode::VersionMismatch, e.what(), mobilehost::Outcome::ClientFault);
    }
    return client_fault(e.what());
  }
  if (!env.is_call()) return client_fault("request body must be a method call");
  const auto* outer_call = &std::get<SoapCall>(env.body);
  trace.method = outer_call->operation.local;

  std::shared_ptr<const ServiceRecord> rec;
  if (!req.path.empty()) {
    try {
      rec = registry_->lookup_by_path(req.path);
    } catch (const Error&) {
    }
  } else if (headers.encrypted && headers.encrypted->service) {
    rec = registry_->find_by_name(*headers.encrypted->service);
  } else {
    rec = registry_->find_by_namespace(outer_call->operation.ns);
  }
  if (!rec) return client_fault("unknown service");
  const ServiceDescriptor& desc = rec->descriptor;
  trace.service = desc.service_name;
  if (desc.security_enabled) keys = keys_for(desc.service_name);

  if (cfg_.auth_required) {
    if (!headers.auth || registry_->check_access_proof(headers.auth->login, headers.auth->password_proof,
                                                       desc.service_name) != AccessDecision::Allow) {
      return fault(FaultCode::Client, "access denied", mobilehost::Outcome::Denied);
    }
  }

  std::string inner_raw;
  std::string_view effective_raw = req.payload;
  if (headers.encrypted) {
    if (!keys) return client_fault("service does not accept encrypted requests");
    try {
      inner_raw = decrypt_message(cipher_from_call(*outer_call), keys->key);
      SoapEnvelope inner = parse_envelope(inner_raw);
      KnownHeaders inner_headers = read_headers(inner_raw);
      if (!inner.is_call()) return client_fault("encrypted body must be a method call");
      if (inner_headers.encrypted) return client_fault("nested encryption is not supported");
      headers.signature = std::move(inner_headers.signature);
      for (auto& q : inner_headers.not_understood) headers.not_understood.push_back(std::move(q));
      env = std::move(inner);
    } catch (const Error& e) {
      return client_fault(e.what());
    }
    effective_raw = inner_raw;
  }

  if (!headers.not_understood.empty()) {
    const QName& q = headers.not_understood.front();
    return fault(FaultCode::MustUnderstand, "header {" + q.ns + "}" + q.local + " was not understood",
                 mobilehost::Outcome::ClientFault);
  }

  if (headers.signature) {
    if (!headers.signature->certificate) return client_fault("signature carries no certificate");
    try {
      Certificate signer = parse_certificate_text(*headers.signature->certificate);
      if (!verify_certificate(signer)) return client_fault("signer certificate is invalid");
      if (!verify_envelope_signature(effective_raw, headers.signature->block, signer.public_key)) {
        return client_fault("signature verification failed");
      }
    } catch (const Error& e) {
      return client_fault(std::string("signature verification failed: ") + e.what());
    }
  }

  const SoapCall& call = std::get<SoapCall>(env.body);
  trace.method = call.operation.local;
  const MethodSignature* sig = nullptr;
  try {
    sig = &validate_call(desc, call);
  } catch (const CallValidationError& e) {
    return client_fault(e.what());
  }

  auto handler = handler_for(desc.service_name);
  if (!handler) return fault(FaultCode::Server, "no handler bound for " + desc.service_name, mobilehost::Outcome::ServerFault);

  std::vector<TypedValue> args;
  args.reserve(call.params.size());
  for (const auto& p : call.params) args.push_back(p.value);

  TypedValue result;
  try {
    std::unique_lock<std::mutex> exclusive;
    if (desc.exclusive_execution) exclusive = std::unique_lock(*exclusive_lock_for(desc.service_name));
    result = coerce_result(*sig, handler->execute_method(sig->name, args));
  } catch (const std::exception& e) {
    return fault(FaultCode::Server, std::string("service failed: ") + e.what(), mobilehost::Outcome::ServerFault);
  } catch (...) {
    return fault(FaultCode::Server, "service failed", mobilehost::Outcome::ServerFault);
  }

  SoapEnvelope resp;
  resp.body = SoapResponseBody::for_method(sig->name, desc.response_namespace_uri, std::move(result));
  std::string body = keys ? serialize_signed(std::move(resp), keys->key) : serialize_envelope(resp);
  trace.outcome = mobilehost::Outcome::Ok;
  return OutboundResponse{200, std::string(kXmlContentType), std::move(body)};
}

OutboundResponse Host::handle_web(const InboundRequest& req) {
  if (req.method != "GET") return plain(405, "method not allowed\n");
  if (req.query == "wsdl" || req.query == "cert") {
    std::shared_ptr<const ServiceRecord> rec;
    try {
      rec = registry_->lookup_by_path(req.path);
    } catch (const Error&) {
      return plain(404, "not found\n");
    }
    if (req.query == "wsdl") return OutboundResponse{200, std::string(kXmlContentType), rec->wsdl.xml_text};
    auto keys = rec->descriptor.security_enabled ? keys_for(rec->descriptor.service_name) : nullptr;
    if (!keys) return plain(404, "service has no certificate\n");
    return plain(200, keys->cert_text);
  }
  if (cfg_.web_root) {
    std::string rel = req.path;
    while (!rel.empty() && rel.front() == '/') rel.erase(0, 1);
    if (rel.empty() || rel.back() == '/') rel += "index.html";
    fs::path p = fs::path(rel).lexically_normal();
    bool escapes = p.empty() || p.is_absolute() || *p.begin() == "..";
    fs::path full = *cfg_.web_root / p;
    std::error_code ec;
    if (!escapes && fs::is_regular_file(full, ec)) {
      std::ifstream in(full, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      if (in) return OutboundResponse{200, content_type_for(full), ss.str()};
    }
  }
  return plain(404, "not found\n");
}

void Host::start() {
  std::lock_guard lock(lifecycle_mu_);
  if (started_) return;
  if (shut_down_) throw Error(Errc::InvalidArgument, "host has been shut down");
  pool_ = std::make_shared<WorkerPool>(cfg_.worker_pool_size);
  auto dispatcher = [this](const InboundRequest& r) { return handle_request(r); };
  try {
    for (const auto& b : cfg_.bindings) listeners_.push_back(start_listener(b, dispatcher, pool_));
  } catch (...) {
    for (auto& l : listeners_) l->stop();
    listeners_.clear();
    pool_->shutdown();
    pool_.reset();
    throw;
  }
  started_ = true;
}

void Host::shutdown() {
  std::lock_guard lock(lifecycle_mu_);
  if (shut_down_) return;
  for (auto& l : listeners_) l->stop();
  if (pool_) pool_->shutdown();
  shut_down_ = true;
  registry_->snapshot(cfg_.data_dir);
}

int Host::port(std::size_t i) const {
  if (i >= listeners_.size()) throw Error(Errc::InvalidArgument, "no listener " + std::to_string(i));
  return listeners_[i]->port();
}

}  // namespace mobilehost

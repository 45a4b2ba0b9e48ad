#pragma once

// The Mobile Host: service lifecycle plus the request pipeline that turns
// an InboundRequest into a response.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mobilehost/registry.hpp"
#include "mobilehost/security.hpp"
#include "mobilehost/service_model.hpp"
#include "mobilehost/transport.hpp"

namespace mobilehost {

struct HostConfig {
  std::vector<BindingConfig> bindings;
  std::filesystem::path data_dir = "mobilehost-data";
  std::filesystem::path wsdl_dir;  // defaults to <data_dir>/wsdl
  std::optional<std::filesystem::path> web_root;
  bool auth_required = false;
  std::size_t worker_pool_size = WorkerPool::kDefaultWorkers;
  std::size_t log_capacity = RequestLog::kDefaultCapacity;
  int key_bits = kDefaultKeyBits;
  // Base URL written into WSDL soap:address; defaults to the first http
  // binding, then http://localhost:5000.
  std::string advertised_base;
};

// Handlers the host can recreate by name after a restart.
// "notes" serves the Note System demo seed; "echo" returns the first
// argument when its type matches the declared return type, otherwise the
// zero value of that type.
std::shared_ptr<ServiceHandler> make_builtin_handler(std::string_view handler_id, const ServiceDescriptor& desc);

class Host {
 public:
  // Loads the snapshot and key store; listeners are not started.
  // Throws IoFailure, CorruptSnapshot or InvalidArgument.
  explicit Host(HostConfig cfg);
  ~Host();
  Host(const Host&) = delete;
  Host& operator=(const Host&) = delete;

  // Idempotent for an identical descriptor (the existing record is returned
  // and the handler rebound). Throws DuplicateService, PathConflict or
  // InvalidDescriptor.
  std::shared_ptr<const ServiceRecord> create_service(const ServiceDescriptor& desc,
                                                      std::shared_ptr<ServiceHandler> handler,
                                                      std::string handler_id = {});
  void bind_handler(const std::string& service, std::shared_ptr<ServiceHandler> handler);
  void remove_service(const std::string& name);  // NotFound

  void add_user(UserRecord u) { registry_->add_user(std::move(u)); }

  // Never throws; every input yields a response.
  OutboundResponse handle_request(const InboundRequest& req) noexcept;

  // Throws BindFailure; already-started listeners are stopped again.
  void start();
  // Stops listeners (draining in-flight requests) and writes the snapshot.
  // Idempotent.
  void shutdown();

  Registry& registry() { return *registry_; }
  const RequestLog& log() const { return log_; }
  const HostConfig& config() const { return cfg_; }
  // Bound port of the i-th configured binding after start().
  int port(std::size_t i) const;
  std::string endpoint_url(const ServiceDescriptor& desc) const;
  std::optional<Certificate> certificate(const std::string& service) const;

 private:
  struct Keys {
    KeyPair key;
    Certificate cert;
    std::string cert_text;
  };
  struct Trace;

  OutboundResponse handle_soap(const InboundRequest& req, Trace& trace);
  OutboundResponse handle_web(const InboundRequest& req);
  std::shared_ptr<const Keys> keys_for(const std::string& service) const;
  std::shared_ptr<ServiceHandler> handler_for(const std::string& service) const;
  std::shared_ptr<std::mutex> exclusive_lock_for(const std::string& service);
  void load_keys(const ServiceRecord& rec);

  HostConfig cfg_;
  std::unique_ptr<Registry> registry_;
  RequestLog log_;
  KeyStore keystore_;

  mutable std::mutex state_mu_;
  std::map<std::string, std::shared_ptr<ServiceHandler>> handlers_;
  std::map<std::string, std::shared_ptr<const Keys>> keys_;
  std::map<std::string, std::shared_ptr<std::mutex>> exclusive_;
  std::mutex create_mu_;

  std::mutex lifecycle_mu_;
  std::shared_ptr<WorkerPool> pool_;
  std::vector<std::unique_ptr<Listener>> listeners_;
  bool started_ = false;
  bool shut_down_ = false;
};

}  // namespace mobilehost

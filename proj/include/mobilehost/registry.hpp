#pragma once

// Database of services, database of users and the bounded request log.

#include <array>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "mobilehost/service_model.hpp"
#include "mobilehost/wsdl.hpp"

namespace mobilehost {

using Timestamp = std::chrono::sys_time<std::chrono::microseconds>;

Timestamp now_micros();

struct ServiceRecord {
  ServiceDescriptor descriptor;
  WsdlDocument wsdl;
  std::optional<std::string> key_set_id;  // present iff descriptor.security_enabled
  Timestamp created_at{};
  // Built-in handler the host rebinds after a restart; empty for handlers
  // registered programmatically.
  std::string handler_id;

  friend bool operator==(const ServiceRecord&, const ServiceRecord&) = default;
};

inline constexpr std::string_view kAllServices = "*";
inline constexpr int kPasswordIterations = 10000;

struct UserRecord {
  std::string login;
  std::array<std::uint8_t, 16> salt{};
  std::string password_digest;  // hex PBKDF2-HMAC-SHA256(password proof, salt)
  std::string device_id;
  std::set<std::string> allowed_services;  // "*" grants every service

  // Hashes the password; the plaintext is not retained.
  static UserRecord create(std::string login, std::string_view password, std::string device_id,
                           std::set<std::string> allowed_services);

  friend bool operator==(const UserRecord&, const UserRecord&) = default;
};

// What a consumer sends instead of the password: hex SHA-256 of it.
std::string password_proof(std::string_view password);

enum class AccessDecision { Allow, Deny };

enum class Outcome { Ok, ClientFault, ServerFault, Denied };
std::string_view to_string(Outcome o);

struct RequestLogEntry {
  Timestamp timestamp{};
  std::string service_name;
  std::string method_name;
  std::int64_t duration_micros = 0;
  Outcome outcome = Outcome::Ok;
};

struct ServiceMetrics {
  std::size_t count = 0;
  double mean_duration_micros = 0;
  double fault_rate = 0;  // client, server and denied outcomes over count
};

class RequestLog {
 public:
  static constexpr std::size_t kDefaultCapacity = 1024;

  explicit RequestLog(std::size_t capacity = kDefaultCapacity);

  void append(RequestLogEntry e);
  std::vector<RequestLogEntry> entries() const;
  std::map<std::string, ServiceMetrics> metrics_summary() const;
  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_appended() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::deque<RequestLogEntry> ring_;
  std::uint64_t total_ = 0;
};

// Thread-safe; each table has its own reader/writer lock. Lookups hand out
// shared pointers to immutable records so readers never see a partial
// update.
class Registry {
 public:
  Registry() = default;
  Registry(const Registry&) = delete;
  Registry& operator=(const Registry&) = delete;

  // Throws DuplicateService or PathConflict.
  void register_service(ServiceRecord rec);
  // Throws NotFound.
  void remove_service(std::string_view name);
  std::shared_ptr<const ServiceRecord> lookup_by_path(std::string_view path) const;  // NotFound
  std::shared_ptr<const ServiceRecord> lookup_by_name(std::string_view name) const;  // NotFound
  std::shared_ptr<const ServiceRecord> find_by_name(std::string_view name) const;    // nullptr when absent
  std::shared_ptr<const ServiceRecord> find_by_namespace(std::string_view ns) const;
  std::vector<std::shared_ptr<const ServiceRecord>> services() const;

  // Throws DuplicateUser.
  void add_user(UserRecord u);
  std::vector<UserRecord> users() const;
  AccessDecision check_access(std::string_view login, std::string_view password, std::string_view service) const;
  AccessDecision check_access_proof(std::string_view login, std::string_view proof, std::string_view service) const;

  // Writes services.db, users.db and checksums into dir.
  void snapshot(const std::filesystem::path& dir) const;
  // Empty or missing directory gives an empty registry. Throws
  // CorruptSnapshot or IoFailure.
  static std::unique_ptr<Registry> load_snapshot(const std::filesystem::path& dir);

  // Structural equality of both tables.
  bool same_state(const Registry& other) const;

 private:
  mutable std::shared_mutex services_mu_;
  std::map<std::string, std::shared_ptr<const ServiceRecord>, std::less<>> by_name_;
  std::map<std::string, std::string, std::less<>> path_to_name_;

  mutable std::shared_mutex users_mu_;
  std::map<std::string, UserRecord, std::less<>> users_;
};

}  // namespace mobilehost

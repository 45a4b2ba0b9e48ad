#include "mobilehost/registry.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mobilehost/security.hpp"

namespace mobilehost {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kServicesFile = "services.db";
constexpr std::string_view kUsersFile = "users.db";
constexpr std::string_view kChecksumsFile = "checksums";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& p, const std::string& content) {
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error(Errc::IoFailure, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) throw Error(Errc::IoFailure, "cannot move " + tmp.string() + ": " + ec.message());
}

json record_to_json(const ServiceRecord& r) {
  json j = descriptor_to_json(r.descriptor);
  j["wsdl"] = r.wsdl.xml_text;
  j["keySetId"] = r.key_set_id ? json(*r.key_set_id) : json(nullptr);
  j["createdAt"] = r.created_at.time_since_epoch().count();
  j["handler"] = r.handler_id;
  return j;
}

ServiceRecord record_from_json(const json& j) {
  ServiceRecord r;
  r.descriptor = descriptor_from_json(j);
  r.wsdl = WsdlDocument{j.at("wsdl").get<std::string>(), r.descriptor};
  if (!j.at("keySetId").is_null()) r.key_set_id = j.at("keySetId").get<std::string>();
  r.created_at = Timestamp(std::chrono::microseconds(j.at("createdAt").get<std::int64_t>()));
  r.handler_id = j.value("handler", "");
  return r;
}

json user_to_json(const UserRecord& u) {
  return {{"login", u.login},
          {"salt", to_hex(u.salt)},
          {"passwordDigest", u.password_digest},
          {"deviceId", u.device_id},
          {"allowedServices", u.allowed_services}};
}

UserRecord user_from_json(const json& j) {
  UserRecord u;
  u.login = j.at("login").get<std::string>();
  Bytes salt = from_hex(j.at("salt").get<std::string>());
  if (salt.size() != u.salt.size()) throw Error(Errc::CorruptSnapshot, "bad salt length for " + u.login);
  std::copy(salt.begin(), salt.end(), u.salt.begin());
  u.password_digest = j.at("passwordDigest").get<std::string>();
  u.device_id = j.at("deviceId").get<std::string>();
  u.allowed_services = j.at("allowedServices").get<std::set<std::string>>();
  return u;
}

std::string digest_for(std::string_view proof, std::span<const std::uint8_t> salt) {
  return to_hex(derive_key(proof, salt, kPasswordIterations));
}

}  // namespace

Timestamp now_micros() { return std::chrono::floor<std::chrono::microseconds>(std::chrono::system_clock::now()); }

std::string password_proof(std::string_view password) { return sha256_hex(password); }

UserRecord UserRecord::create(std::string login, std::string_view password, std::string device_id,
                              std::set<std::string> allowed_services) {
  if (login.empty() || login.find_first_of(" \t\r\n") != std::string::npos) {
    throw Error(Errc::InvalidArgument, "login must be a non-empty token");
  }
  UserRecord u;
  u.login = std::move(login);
  Bytes salt = random_bytes(u.salt.size());
  std::copy(salt.begin(), salt.end(), u.salt.begin());
  u.password_digest = digest_for(password_proof(password), u.salt);
  u.device_id = std::move(device_id);
  u.allowed_services = std::move(allowed_services);
  return u;
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Ok: return "ok";
    case Outcome::ClientFault: return "clientFault";
    case Outcome::ServerFault: return "serverFault";
    case Outcome::Denied: return "denied";
  }
  return "ok";
}

RequestLog::RequestLog(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

void RequestLog::append(RequestLogEntry e) {
  std::lock_guard lock(mu_);
  if (ring_.size() == capacity_) ring_.pop_front();
  ring_.push_back(std::move(e));
  ++total_;
}

std::vector<RequestLogEntry> RequestLog::entries() const {
  std::lock_guard lock(mu_);
  return {ring_.begin(), ring_.end()};
}

std::uint64_t RequestLog::total_appended() const {
  std::lock_guard lock(mu_);
  return total_;
}

std::map<std::string, ServiceMetrics> RequestLog::metrics_summary() const {
  struct Acc {
    std::size_t count = 0;
    std::int64_t total = 0;
    std::size_t faults = 0;
  };
  std::map<std::string, Acc> acc;
  {
    std::lock_guard lock(mu_);
    for (const auto& e : ring_) {
      auto& a = acc[e.service_name];
      ++a.count;
      a.total += e.duration_micros;
      if (e.outcome != Outcome::Ok) ++a.faults;
    }
  }
  std::map<std::string, ServiceMetrics> out;
  for (const auto& [name, a] : acc) {
    out[name] = ServiceMetrics{a.count, static_cast<double>(a.total) / static_cast<double>(a.count),
                               static_cast<double>(a.faults) / static_cast<double>(a.count)};
  }
  return out;
}

void Registry::register_service(ServiceRecord rec) {
  rec.descriptor.validate();
  auto shared = std::make_shared<const ServiceRecord>(std::move(rec));
  const auto& d = shared->descriptor;
  std::unique_lock lock(services_mu_);
  if (by_name_.count(d.service_name)) {
    throw Error(Errc::DuplicateService, "service '" + d.service_name + "' already exists");
  }
  if (path_to_name_.count(d.endpoint_path)) {
    throw Error(Errc::PathConflict, "endpoint path '" + d.endpoint_path + "' is already in use");
  }
  path_to_name_.emplace(d.endpoint_path, d.service_name);
  by_name_.emplace(d.service_name, std::move(shared));
}

void Registry::remove_service(std::string_view name) {
  std::unique_lock lock(services_mu_);
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw Error(Errc::NotFound, "unknown service '" + std::string(name) + "'");
  path_to_name_.erase(it->second->descriptor.endpoint_path);
  by_name_.erase(it);
}

std::shared_ptr<const ServiceRecord> Registry::lookup_by_path(std::string_view path) const {
  std::shared_lock lock(services_mu_);
  auto it = path_to_name_.find(path);
  if (it == path_to_name_.end()) throw Error(Errc::NotFound, "no service at '" + std::string(path) + "'");
  return by_name_.find(it->second)->second;
}

std::shared_ptr<const ServiceRecord> Registry::lookup_by_name(std::string_view name) const {
  auto rec = find_by_name(name);
  if (!rec) throw Error(Errc::NotFound, "unknown service '" + std::string(name) + "'");
  return rec;
}

std::shared_ptr<const ServiceRecord> Registry::find_by_name(std::string_view name) const {
  std::shared_lock lock(services_mu_);
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

std::shared_ptr<const ServiceRecord> Registry::find_by_namespace(std::string_view ns) const {
  std::shared_lock lock(services_mu_);
  for (const auto& [name, rec] : by_name_) {
    if (rec->descriptor.namespace_uri == ns) return rec;
  }
  return nullptr;
}

std::vector<std::shared_ptr<const ServiceRecord>> Registry::services() const {
  std::shared_lock lock(services_mu_);
  std::vector<std::shared_ptr<const ServiceRecord>> out;
  for (const auto& [name, rec] : by_name_) out.push_back(rec);
  return out;
}

void Registry::add_user(UserRecord u) {
  std::unique_lock lock(users_mu_);
  if (users_.count(u.login)) throw Error(Errc::DuplicateUser, "user '" + u.login + "' already exists");
  std::string login = u.login;
  users_.emplace(std::move(login), std::move(u));
}

std::vector<UserRecord> Registry::users() const {
  std::shared_lock lock(users_mu_);
  std::vector<UserRecord> out;
  for (const auto& [login, u] : users_) out.push_back(u);
  return out;
}

AccessDecision Registry::check_access(std::string_view login, std::string_view password,
                                      std::string_view service) const {
  return check_access_proof(login, password_proof(password), service);
}

AccessDecision Registry::check_access_proof(std::string_view login, std::string_view proof,
                                            std::string_view service) const {
  UserRecord user;
  {
    std::shared_lock lock(users_mu_);
    auto it = users_.find(login);
    if (it == users_.end()) return AccessDecision::Deny;
    user = it->second;
  }
  Bytes expected;
  try {
    expected = from_hex(user.password_digest);
  } catch (const Error&) {
    return AccessDecision::Deny;
  }
  if (!constant_time_equal(derive_key(proof, user.salt, kPasswordIterations), expected)) return AccessDecision::Deny;
  bool allowed = user.allowed_services.count(std::string(kAllServices)) ||
                 user.allowed_services.count(std::string(service));
  return allowed ? AccessDecision::Allow : AccessDecision::Deny;
}

void Registry::snapshot(const fs::path& dir) const {
  json services = json::array();
  for (const auto& rec : this->services()) services.push_back(record_to_json(*rec));
  json users = json::array();
  for (const auto& u : this->users()) users.push_back(user_to_json(u));

  std::string services_text = json{{"format", "mobilehost-services/1"}, {"services", services}}.dump(2) + "\n";
  std::string users_text = json{{"format", "mobilehost-users/1"}, {"users", users}}.dump(2) + "\n";

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  write_file_atomic(dir / kServicesFile, services_text);
  write_file_atomic(dir / kUsersFile, users_text);
  std::string sums = sha256_hex(services_text) + "  " + std::string(kServicesFile) + "\n" + sha256_hex(users_text) +
                     "  " + std::string(kUsersFile) + "\n";
  write_file_atomic(dir / kChecksumsFile, sums);
}

std::unique_ptr<Registry> Registry::load_snapshot(const fs::path& dir) {
  auto reg = std::make_unique<Registry>();
  std::error_code ec;
  bool any = fs::exists(dir / kServicesFile, ec) || fs::exists(dir / kUsersFile, ec) ||
             fs::exists(dir / kChecksumsFile, ec);
  if (!any) return reg;
  if (!fs::exists(dir / kChecksumsFile, ec)) throw Error(Errc::CorruptSnapshot, "snapshot has no checksums file");

  std::map<std::string, std::string> expected;
  {
    std::istringstream in(read_file(dir / kChecksumsFile));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto sep = line.find("  ");
      if (sep == std::string::npos) throw Error(Errc::CorruptSnapshot, "malformed checksums line");
      expected[line.substr(sep + 2)] = line.substr(0, sep);
    }
  }
  auto load_table = [&](std::string_view file) {
    auto it = expected.find(std::string(file));
    if (it == expected.end()) throw Error(Errc::CorruptSnapshot, "checksums do not cover " + std::string(file));
    if (!fs::exists(dir / file, ec)) throw Error(Errc::CorruptSnapshot, std::string(file) + " is missing");
    std::string text = read_file(dir / file);
    if (sha256_hex(text) != it->second) throw Error(Errc::CorruptSnapshot, std::string(file) + " checksum mismatch");
    return text;
  };

  try {
    json services = json::parse(load_table(kServicesFile));
    for (const auto& j : services.at("services")) reg->register_service(record_from_json(j));
    json users = json::parse(load_table(kUsersFile));
    for (const auto& j : users.at("users")) reg->add_user(user_from_json(j));
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptSnapshot, std::string("snapshot contents: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::CorruptSnapshot || e.code() == Errc::IoFailure) throw;
    throw Error(Errc::CorruptSnapshot, std::string("snapshot contents: ") + e.what());
  }
  return reg;
}

bool Registry::same_state(const Registry& other) const {
  auto a = services();
  auto b = other.services();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(*a[i] == *b[i])) return false;
  }
  return users() == other.users();
}

}  // namespace mobilehost

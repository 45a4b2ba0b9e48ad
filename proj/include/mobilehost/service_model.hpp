#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mobilehost/error.hpp"
#include "mobilehost/soap.hpp"

namespace mobilehost {

struct ParameterSpec {
  std::string name;
  XsdType type = XsdType::String;

  friend bool operator==(const ParameterSpec&, const ParameterSpec&) = default;
};

struct MethodSignature {
  std::string name;
  std::vector<ParameterSpec> params;
  XsdType return_type = XsdType::String;

  friend bool operator==(const MethodSignature&, const MethodSignature&) = default;
};

// What a service offers: the description a developer supplies when the
// service is created. Immutable once registered.
struct ServiceDescriptor {
  std::string service_name;
  std::string namespace_uri;
  std::string endpoint_path;
  std::string response_namespace_uri;
  std::vector<MethodSignature> methods;
  bool security_enabled = false;
  bool exclusive_execution = false;

  // Throws Error(InvalidDescriptor) on the first violated invariant.
  void validate() const;
  const MethodSignature* find_method(std::string_view name) const;

  friend bool operator==(const ServiceDescriptor&, const ServiceDescriptor&) = default;
};

// Carries the structured reason a call failed validation.
class CallValidationError : public Error {
 public:
  CallValidationError(Errc code, std::string message, std::string param = {}, std::size_t position = 0,
                      std::string expected = {}, std::string got = {})
      : Error(code, message),
        param_(std::move(param)),
        position_(position),
        expected_(std::move(expected)),
        got_(std::move(got)) {}

  const std::string& param() const { return param_; }
  std::size_t position() const { return position_; }
  const std::string& expected() const { return expected_; }
  const std::string& got() const { return got_; }

 private:
  std::string param_;
  std::size_t position_;
  std::string expected_;
  std::string got_;
};

// The executeMethod boundary. Implementations may throw anything; the host
// turns exceptions into Server faults.
class ServiceHandler {
 public:
  virtual ~ServiceHandler() = default;
  virtual TypedValue execute_method(std::string_view method, std::span<const TypedValue> args) = 0;
};

class FunctionHandler : public ServiceHandler {
 public:
  using Fn = std::function<TypedValue(std::string_view, std::span<const TypedValue>)>;
  explicit FunctionHandler(Fn fn) : fn_(std::move(fn)) {}
  TypedValue execute_method(std::string_view method, std::span<const TypedValue> args) override {
    return fn_(method, args);
  }

 private:
  Fn fn_;
};

// Matches by method name, then arity, then per position name and type.
// Throws CallValidationError with UnknownMethod, ArityMismatch,
// NameMismatch or TypeMismatch.
const MethodSignature& validate_call(const ServiceDescriptor& desc, const SoapCall& call);

// Throws Error(ReturnTypeMismatch); never converts between types.
TypedValue coerce_result(const MethodSignature& sig, TypedValue raw);

// SHA-256 over a canonical encoding; method order does not matter.
std::string descriptor_fingerprint(const ServiceDescriptor& desc);

// JSON form shared by service manifests and registry snapshots.
nlohmann::json descriptor_to_json(const ServiceDescriptor& desc);
ServiceDescriptor descriptor_from_json(const nlohmann::json& j);

}  // namespace mobilehost

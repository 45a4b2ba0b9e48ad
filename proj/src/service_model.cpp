#include "mobilehost/service_model.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "mobilehost/security.hpp"
#include "mobilehost/xml.hpp"

namespace mobilehost {

namespace {

[[noreturn]] void invalid(const std::string& why) { throw Error(Errc::InvalidDescriptor, why); }

void append_field(std::string& out, std::string_view field) {
  out += std::to_string(field.size());
  out += ':';
  out += field;
}

XsdType xsd_from_json(const nlohmann::json& j) {
  auto name = j.get<std::string>();
  if (name.rfind("xsd:", 0) == 0) name = name.substr(4);
  auto t = xsd_type_from_name(name);
  if (!t) invalid("unsupported type '" + name + "'");
  return *t;
}

}  // namespace

void ServiceDescriptor::validate() const {
  if (!xml::is_ncname(service_name)) invalid("service name '" + service_name + "' is not a valid token");
  if (namespace_uri.empty()) invalid("service '" + service_name + "' needs a namespace URI");
  if (endpoint_path.empty() || endpoint_path.front() != '/') invalid("endpoint path must begin with '/'");
  if (endpoint_path.find_first_of("?# \t\r\n") != std::string::npos) {
    invalid("endpoint path '" + endpoint_path + "' contains reserved characters");
  }
  if (methods.empty()) invalid("service '" + service_name + "' declares no methods");
  std::set<std::string> names;
  for (const auto& m : methods) {
    if (!xml::is_ncname(m.name)) invalid("method name '" + m.name + "' is not a valid token");
    // A body element named *Response is read as a response, so such
    // methods could never be called.
    if (m.name.ends_with("Response")) invalid("method name '" + m.name + "' must not end with 'Response'");
    if (!names.insert(m.name).second) invalid("duplicate method '" + m.name + "'");
    std::set<std::string> params;
    for (const auto& p : m.params) {
      if (!xml::is_ncname(p.name)) invalid("parameter name '" + p.name + "' is not a valid token");
      if (!params.insert(p.name).second) invalid("duplicate parameter '" + p.name + "' in " + m.name);
    }
  }
}

const MethodSignature* ServiceDescriptor::find_method(std::string_view name) const {
  for (const auto& m : methods) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

const MethodSignature& validate_call(const ServiceDescriptor& desc, const SoapCall& call) {
  const std::string& method = call.operation.local;
  const MethodSignature* sig = desc.find_method(method);
  if (!sig) {
    throw CallValidationError(Errc::UnknownMethod, "unknown method: " + method);
  }
  if (call.params.size() != sig->params.size()) {
    throw CallValidationError(Errc::ArityMismatch,
                              "arity mismatch for " + method + ": expected " + std::to_string(sig->params.size()) +
                                  " parameters, got " + std::to_string(call.params.size()),
                              {}, 0, std::to_string(sig->params.size()), std::to_string(call.params.size()));
  }
  for (std::size_t i = 0; i < sig->params.size(); ++i) {
    const auto& spec = sig->params[i];
    const auto& got = call.params[i];
    if (got.name != spec.name) {
      throw CallValidationError(Errc::NameMismatch,
                                "parameter " + std::to_string(i + 1) + " of " + method + ": expected '" + spec.name +
                                    "', got '" + got.name + "'",
                                spec.name, i, spec.name, got.name);
    }
    if (got.value.type() != spec.type) {
      throw CallValidationError(Errc::TypeMismatch,
                                "parameter '" + spec.name + "' of " + method + ": expected xsd:" +
                                    std::string(xsd_name(spec.type)) + ", got xsd:" +
                                    std::string(xsd_name(got.value.type())),
                                spec.name, i, std::string(xsd_name(spec.type)),
                                std::string(xsd_name(got.value.type())));
    }
  }
  return *sig;
}

TypedValue coerce_result(const MethodSignature& sig, TypedValue raw) {
  if (raw.type() != sig.return_type) {
    throw Error(Errc::ReturnTypeMismatch, sig.name + " declared to return xsd:" +
                                              std::string(xsd_name(sig.return_type)) + " but handler returned xsd:" +
                                              std::string(xsd_name(raw.type())));
  }
  return raw;
}

std::string descriptor_fingerprint(const ServiceDescriptor& desc) {
  std::vector<const MethodSignature*> methods;
  for (const auto& m : desc.methods) methods.push_back(&m);
  std::sort(methods.begin(), methods.end(),
            [](const MethodSignature* a, const MethodSignature* b) { return a->name < b->name; });

  std::string canon = "mobilehost-descriptor-v1\n";
  append_field(canon, desc.service_name);
  append_field(canon, desc.namespace_uri);
  append_field(canon, desc.endpoint_path);
  append_field(canon, desc.response_namespace_uri);
  append_field(canon, desc.security_enabled ? "1" : "0");
  append_field(canon, desc.exclusive_execution ? "1" : "0");
  append_field(canon, std::to_string(methods.size()));
  for (const auto* m : methods) {
    append_field(canon, m->name);
    append_field(canon, xsd_name(m->return_type));
    append_field(canon, std::to_string(m->params.size()));
    for (const auto& p : m->params) {
      append_field(canon, p.name);
      append_field(canon, xsd_name(p.type));
    }
  }
  return sha256_hex(canon);
}

nlohmann::json descriptor_to_json(const ServiceDescriptor& desc) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : desc.methods) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : m.params) params.push_back({{"name", p.name}, {"type", xsd_name(p.type)}});
    methods.push_back({{"name", m.name}, {"params", params}, {"returnType", xsd_name(m.return_type)}});
  }
  return {{"serviceName", desc.service_name},
          {"namespaceUri", desc.namespace_uri},
          {"endpointPath", desc.endpoint_path},
          {"responseNamespaceUri", desc.response_namespace_uri},
          {"securityEnabled", desc.security_enabled},
          {"exclusiveExecution", desc.exclusive_execution},
          {"methods", methods}};
}

ServiceDescriptor descriptor_from_json(const nlohmann::json& j) {
  try {
    ServiceDescriptor d;
    d.service_name = j.at("serviceName").get<std::string>();
    d.namespace_uri = j.at("namespaceUri").get<std::string>();
    d.endpoint_path = j.at("endpointPath").get<std::string>();
    d.response_namespace_uri = j.value("responseNamespaceUri", d.namespace_uri);
    d.security_enabled = j.value("securityEnabled", false);
    d.exclusive_execution = j.value("exclusiveExecution", false);
    for (const auto& jm : j.at("methods")) {
      MethodSignature m;
      m.name = jm.at("name").get<std::string>();
      m.return_type = xsd_from_json(jm.at("returnType"));
      for (const auto& jp : jm.value("params", nlohmann::json::array())) {
        m.params.push_back({jp.at("name").get<std::string>(), xsd_from_json(jp.at("type"))});
      }
      d.methods.push_back(std::move(m));
    }
    d.validate();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidDescriptor, std::string("service description: ") + e.what());
  }
}

}  // namespace mobilehost

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "mobilehost/service_model.hpp"

namespace mobilehost {

inline constexpr std::string_view kWsdlNs = "http://schemas.xmlsoap.org/wsdl/";
inline constexpr std::string_view kWsdlSoapNs = "http://schemas.xmlsoap.org/wsdl/soap/";
inline constexpr std::string_view kSoapHttpTransport = "http://schemas.xmlsoap.org/soap/http";

struct WsdlDocument {
  std::string xml_text;
  ServiceDescriptor descriptor;

  friend bool operator==(const WsdlDocument&, const WsdlDocument&) = default;
};

// WSDL 1.1, rpc/encoded. Output is a pure function of its inputs.
WsdlDocument generate_wsdl(const ServiceDescriptor& desc, std::string_view endpoint_url);

// Recovers the wire-visible descriptor fields. security_enabled and
// exclusive_execution are host-local and come back false.
// Throws Error(MalformedXml) or Error(UnsupportedWsdl).
ServiceDescriptor parse_wsdl(std::string_view xml_text);

// Writes <dir>/<serviceName>.wsdl; throws Error(IoFailure).
std::filesystem::path store_wsdl(const WsdlDocument& doc, const std::filesystem::path& dir);

// "http://host:port/path" -> "/path"; empty path maps to "/".
std::string url_path(std::string_view url);

}  // namespace mobilehost

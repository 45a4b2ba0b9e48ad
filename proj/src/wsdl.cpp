#include "mobilehost/wsdl.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "mobilehost/xml.hpp"

namespace mobilehost {

namespace {

[[noreturn]] void unsupported(const std::string& why) { throw Error(Errc::UnsupportedWsdl, why); }

struct Out {
  std::string s;
  void line(int indent, std::string_view text) {
    s.append(static_cast<std::size_t>(indent) * 2, ' ');
    s += text;
    s += '\n';
  }
};

std::string q(std::string_view v) { return "\"" + xml::escape_attribute(v) + "\""; }

std::string required_attr(const xml::Element& e, std::string_view name) {
  const auto* a = e.find_attribute("", name);
  if (!a) unsupported("<" + e.local + "> lacks the '" + std::string(name) + "' attribute");
  return a->value;
}

// Message references are QNames in the target namespace.
std::string message_ref(const xml::Document& doc, const xml::Element& e, const std::string& target_ns) {
  auto resolved = xml::resolve_qname_value(doc, e, required_attr(e, "message"));
  if (!resolved || resolved->ns != target_ns) unsupported("message reference outside the target namespace");
  return resolved->local;
}

struct Part {
  std::string name;
  XsdType type;
};

}  // namespace

std::string url_path(std::string_view url) {
  auto scheme = url.find("://");
  std::string_view rest = scheme == std::string_view::npos ? url : url.substr(scheme + 3);
  if (scheme != std::string_view::npos) {
    auto slash = rest.find('/');
    rest = slash == std::string_view::npos ? std::string_view("/") : rest.substr(slash);
  }
  rest = rest.substr(0, rest.find_first_of("?#"));
  return rest.empty() ? "/" : std::string(rest);
}

WsdlDocument generate_wsdl(const ServiceDescriptor& desc, std::string_view endpoint_url) {
  desc.validate();
  const std::string& svc = desc.service_name;
  Out o;
  o.line(0, "<?xml version=\"1.0\" encoding=\"utf-8\"?>");
  o.line(0, "<wsdl:definitions xmlns:wsdl=" + q(kWsdlNs) + " xmlns:soap=" + q(kWsdlSoapNs) +
                " xmlns:soapenc=" + q(kSoapEncodingNs) + " xmlns:xsd=" + q(kXsdNs) +
                " xmlns:tns=" + q(desc.namespace_uri) + " name=" + q(svc) +
                " targetNamespace=" + q(desc.namespace_uri) + ">");

  for (const auto& m : desc.methods) {
    o.line(1, "<wsdl:message name=" + q(m.name + "Request") + ">");
    for (const auto& p : m.params) {
      o.line(2, "<wsdl:part name=" + q(p.name) + " type=" + q("xsd:" + std::string(xsd_name(p.type))) + "/>");
    }
    o.line(1, "</wsdl:message>");
    o.line(1, "<wsdl:message name=" + q(m.name + "Response") + ">");
    o.line(2, "<wsdl:part name=" + q(m.name + "Result") +
                  " type=" + q("xsd:" + std::string(xsd_name(m.return_type))) + "/>");
    o.line(1, "</wsdl:message>");
  }

  o.line(1, "<wsdl:portType name=" + q(svc + "PortType") + ">");
  for (const auto& m : desc.methods) {
    std::string order;
    for (const auto& p : m.params) order += (order.empty() ? "" : " ") + p.name;
    o.line(2, "<wsdl:operation name=" + q(m.name) + (order.empty() ? "" : " parameterOrder=" + q(order)) + ">");
    o.line(3, "<wsdl:input message=" + q("tns:" + m.name + "Request") + "/>");
    o.line(3, "<wsdl:output message=" + q("tns:" + m.name + "Response") + "/>");
    o.line(2, "</wsdl:operation>");
  }
  o.line(1, "</wsdl:portType>");

  o.line(1, "<wsdl:binding name=" + q(svc + "SoapBinding") + " type=" + q("tns:" + svc + "PortType") + ">");
  o.line(2, "<soap:binding style=\"rpc\" transport=" + q(kSoapHttpTransport) + "/>");
  for (const auto& m : desc.methods) {
    o.line(2, "<wsdl:operation name=" + q(m.name) + ">");
    o.line(3, "<soap:operation soapAction=\"\"/>");
    o.line(3, "<wsdl:input>");
    o.line(4, "<soap:body use=\"encoded\" encodingStyle=" + q(kSoapEncodingNs) + " namespace=" +
                  q(desc.namespace_uri) + "/>");
    o.line(3, "</wsdl:input>");
    o.line(3, "<wsdl:output>");
    o.line(4, "<soap:body use=\"encoded\" encodingStyle=" + q(kSoapEncodingNs) + " namespace=" +
                  q(desc.response_namespace_uri) + "/>");
    o.line(3, "</wsdl:output>");
    o.line(2, "</wsdl:operation>");
  }
  o.line(1, "</wsdl:binding>");

  o.line(1, "<wsdl:service name=" + q(svc) + ">");
  o.line(2, "<wsdl:port name=" + q(svc + "Port") + " binding=" + q("tns:" + svc + "SoapBinding") + ">");
  o.line(3, "<soap:address location=" + q(endpoint_url) + "/>");
  o.line(2, "</wsdl:port>");
  o.line(1, "</wsdl:service>");
  o.line(0, "</wsdl:definitions>");
  return WsdlDocument{std::move(o.s), desc};
}

ServiceDescriptor parse_wsdl(std::string_view xml_text) {
  xml::Document doc = xml::parse(xml_text);
  const xml::Element& root = *doc.root;
  if (root.ns != kWsdlNs || root.local != "definitions") unsupported("root is not wsdl:definitions");

  ServiceDescriptor desc;
  desc.service_name = required_attr(root, "name");
  desc.namespace_uri = required_attr(root, "targetNamespace");

  std::map<std::string, std::vector<Part>> messages;
  const xml::Element* port_type = nullptr;
  const xml::Element* binding = nullptr;
  const xml::Element* service = nullptr;
  for (const auto* child : root.child_elements()) {
    if (child->ns != kWsdlNs) unsupported("unexpected element " + child->qualified());
    if (child->local == "message") {
      std::vector<Part> parts;
      for (const auto* part : child->child_elements()) {
        if (part->ns != kWsdlNs || part->local != "part") unsupported("unexpected element in message");
        if (part->find_attribute("", "element")) unsupported("document-style message parts are not supported");
        auto type = xml::resolve_qname_value(doc, *part, required_attr(*part, "type"));
        auto xsd = type && type->ns == kXsdNs ? xsd_type_from_name(type->local) : std::nullopt;
        if (!xsd) unsupported("unsupported part type '" + required_attr(*part, "type") + "'");
        parts.push_back({required_attr(*part, "name"), *xsd});
      }
      if (!messages.emplace(required_attr(*child, "name"), std::move(parts)).second) {
        unsupported("duplicate message");
      }
    } else if (child->local == "portType") {
      if (port_type) unsupported("multiple portTypes");
      port_type = child;
    } else if (child->local == "binding") {
      if (binding) unsupported("multiple bindings");
      binding = child;
    } else if (child->local == "service") {
      if (service) unsupported("multiple services");
      service = child;
    } else {
      unsupported("unsupported WSDL construct wsdl:" + child->local);
    }
  }
  if (!port_type) unsupported("no portType");
  if (!binding) unsupported("no binding");
  if (!service) unsupported("no service");

  for (const auto* op : port_type->child_elements()) {
    if (op->ns != kWsdlNs || op->local != "operation") unsupported("unexpected element in portType");
    MethodSignature m;
    m.name = required_attr(*op, "name");
    const auto* input = op->first_child(kWsdlNs, "input");
    const auto* output = op->first_child(kWsdlNs, "output");
    if (!input || !output) unsupported("operation " + m.name + " must have input and output");
    auto in_it = messages.find(message_ref(doc, *input, desc.namespace_uri));
    auto out_it = messages.find(message_ref(doc, *output, desc.namespace_uri));
    if (in_it == messages.end() || out_it == messages.end()) unsupported("operation " + m.name + " references an unknown message");
    if (out_it->second.size() != 1) unsupported("operation " + m.name + " must have exactly one output part");
    m.return_type = out_it->second.front().type;

    std::vector<Part> parts = in_it->second;
    if (const auto* order = op->find_attribute("", "parameterOrder")) {
      std::istringstream names(order->value);
      std::vector<Part> ordered;
      for (std::string n; names >> n;) {
        auto it = std::find_if(parts.begin(), parts.end(), [&](const Part& p) { return p.name == n; });
        if (it == parts.end()) unsupported("parameterOrder names unknown part '" + n + "'");
        ordered.push_back(*it);
      }
      if (ordered.size() != parts.size()) unsupported("parameterOrder does not cover every part");
      parts = std::move(ordered);
    }
    for (auto& p : parts) m.params.push_back({std::move(p.name), p.type});
    desc.methods.push_back(std::move(m));
  }
  if (desc.methods.empty()) unsupported("empty portType");

  const auto* soap_binding = binding->first_child(kWsdlSoapNs, "binding");
  if (!soap_binding) unsupported("binding is not a SOAP binding");
  const auto* style = soap_binding->find_attribute("", "style");
  if (!style || style->value != "rpc") unsupported("only rpc-style bindings are supported");

  bool have_response_ns = false;
  for (const auto* op : binding->child_elements()) {
    if (op->ns == kWsdlSoapNs && op->local == "binding") continue;
    if (op->ns != kWsdlNs || op->local != "operation") unsupported("unexpected element in binding");
    for (std::string_view direction : {"input", "output"}) {
      const auto* dir = op->first_child(kWsdlNs, direction);
      const auto* body = dir ? dir->first_child(kWsdlSoapNs, "body") : nullptr;
      if (!body) unsupported("binding operation lacks soap:body");
      const auto* use = body->find_attribute("", "use");
      if (!use || use->value != "encoded") unsupported("only encoded use is supported");
      if (direction == "output") {
        std::string ns = body->find_attribute("", "namespace") ? body->find_attribute("", "namespace")->value
                                                                : desc.namespace_uri;
        if (have_response_ns && ns != desc.response_namespace_uri) {
          unsupported("operations disagree on the response namespace");
        }
        desc.response_namespace_uri = ns;
        have_response_ns = true;
      }
    }
  }
  if (!have_response_ns) desc.response_namespace_uri = desc.namespace_uri;

  const auto* port = service->first_child(kWsdlNs, "port");
  const auto* address = port ? port->first_child(kWsdlSoapNs, "address") : nullptr;
  if (!address) unsupported("service has no SOAP address");
  desc.endpoint_path = url_path(required_attr(*address, "location"));

  try {
    desc.validate();
  } catch (const Error& e) {
    unsupported(e.what());
  }
  return desc;
}

std::filesystem::path store_wsdl(const WsdlDocument& doc, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  fs::path target = dir / (doc.descriptor.service_name + ".wsdl");
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot write " + tmp.string());
    out << doc.xml_text;
    if (!out.flush()) throw Error(Errc::IoFailure, "cannot write " + tmp.string());
  }
  fs::rename(tmp, target, ec);
  if (ec) throw Error(Errc::IoFailure, "cannot move " + tmp.string() + ": " + ec.message());
  return target;
}

}  // namespace mobilehost

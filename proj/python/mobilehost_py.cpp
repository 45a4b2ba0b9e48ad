// Python bindings for the main Mobile Host operations.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "mobilehost/client.hpp"
#include "mobilehost/host.hpp"
#include "mobilehost/notes.hpp"
#include "mobilehost/wsdl.hpp"

namespace py = pybind11;
using namespace mobilehost;

namespace {

// Descriptors cross the boundary as JSON text; the Python side wraps them in json.
ServiceDescriptor descriptor_of(const std::string& json_text) {
  return descriptor_from_json(nlohmann::json::parse(json_text));
}

std::string json_of(const ServiceDescriptor& d) { return descriptor_to_json(d).dump(); }

py::object value_to_py(const TypedValue& v) {
  switch (v.type()) {
    case XsdType::String: return py::str(v.as_string());
    case XsdType::Int: return py::int_(v.as_int());
    case XsdType::Double: return py::float_(v.as_double());
    case XsdType::Boolean: return py::bool_(v.as_bool());
  }
  return py::none();
}

TypedValue value_from_py(const py::handle& o) {
  if (py::isinstance<py::bool_>(o)) return TypedValue::boolean(o.cast<bool>());
  if (py::isinstance<py::int_>(o)) return TypedValue::integer(o.cast<std::int32_t>());
  if (py::isinstance<py::float_>(o)) return TypedValue::number(o.cast<double>());
  return TypedValue::string(py::str(o).cast<std::string>());
}

py::dict envelope_to_dict(const SoapEnvelope& env) {
  py::dict d;
  py::list headers;
  for (const auto& h : env.headers) headers.append(py::make_tuple(h.name.ns, h.name.local, h.raw));
  d["headers"] = headers;
  if (const auto* call = std::get_if<SoapCall>(&env.body)) {
    d["kind"] = "call";
    d["operation"] = call->operation.local;
    d["namespace"] = call->operation.ns;
    py::list params;
    for (const auto& p : call->params) params.append(py::make_tuple(p.name, xsd_name(p.value.type()), value_to_py(p.value)));
    d["params"] = params;
  } else if (const auto* resp = std::get_if<SoapResponseBody>(&env.body)) {
    d["kind"] = "response";
    d["operation"] = resp->operation.local;
    d["namespace"] = resp->operation.ns;
    d["result_name"] = resp->result_name;
    d["result"] = value_to_py(resp->result);
  } else {
    const auto& f = std::get<SoapFault>(env.body);
    d["kind"] = "fault";
    d["faultcode"] = std::string(to_string(f.code));
    d["faultstring"] = f.faultstring;
    d["detail"] = f.detail ? py::object(py::str(*f.detail)) : py::object(py::none());
  }
  return d;
}

class PyHandler : public ServiceHandler {
 public:
  explicit PyHandler(py::function fn) : fn_(std::move(fn)) {}
  ~PyHandler() override {
    py::gil_scoped_acquire gil;
    fn_ = py::function();
  }

  TypedValue execute_method(std::string_view method, std::span<const TypedValue> args) override {
    py::gil_scoped_acquire gil;
    py::list py_args;
    for (const auto& a : args) py_args.append(value_to_py(a));
    try {
      return value_from_py(fn_(std::string(method), py_args));
    } catch (py::error_already_set& e) {
      throw std::runtime_error(e.what());
    }
  }

 private:
  py::function fn_;
};

}  // namespace

PYBIND11_MODULE(mobilehost, m) {
  m.doc() = "Embeddable SOAP service host";

  static py::exception<Error> error_type(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error_type, (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  m.def("canonicalize", [](const std::string& xml) { return canonicalize(xml); });
  m.def("parse_envelope", [](const std::string& xml) { return envelope_to_dict(parse_envelope(xml)); });
  m.def("roundtrip_envelope", [](const std::string& xml) { return serialize_envelope(parse_envelope(xml)); },
        "Parse then serialize an envelope.");
  m.def("make_fault", [](const std::string& code, const std::string& message) {
    auto c = fault_code_from_string(code);
    if (!c) throw Error(Errc::InvalidArgument, "unknown fault code " + code);
    return serialize_envelope(make_fault(*c, message));
  });

  m.def("generate_wsdl", [](const std::string& descriptor_json, const std::string& location) {
    return generate_wsdl(descriptor_of(descriptor_json), location).xml_text;
  });
  m.def("parse_wsdl", [](const std::string& xml) { return json_of(parse_wsdl(xml)); });
  m.def("validate_descriptor", [](const std::string& descriptor_json) { descriptor_of(descriptor_json).validate(); });
  m.def("notes_descriptor", [](const std::string& base) { return json_of(notes_descriptor(base)); },
        py::arg("base") = "http://localhost:5000");
  m.def(
      "render_notes",
      [](const std::string& student, const std::string& discipline, std::optional<std::string> seed) {
        return seed ? render_notes(parse_notes_seed(*seed), student, discipline)
                    : render_notes(default_notes_seed(), student, discipline);
      },
      py::arg("student"), py::arg("discipline"), py::arg("seed") = py::none());

  m.def("password_proof", [](const std::string& pw) { return password_proof(pw); });

  py::class_<KeyPair>(m, "KeyPair")
      .def_static("generate", &generate_keypair, py::arg("bits") = kDefaultKeyBits)
      .def_property_readonly("bits", &KeyPair::bits)
      .def("sign", [](const KeyPair& k, const std::string& msg) { return sign_message(msg, k).value; },
           "Base64 RSA-SHA256 signature of msg.")
      .def("verify", [](const KeyPair& k, const std::string& msg, const std::string& value) {
        SignatureBlock block{std::string(kSignatureAlgorithm), std::string(kDigestAlgorithm), value};
        return verify_signature(msg, block, k.public_key());
      })
      .def("encrypt", [](const KeyPair& k, const std::string& msg) {
        auto c = encrypt_message(msg, k.public_key());
        return py::make_tuple(c.wrapped_key, c.iv, c.ciphertext);
      })
      .def("decrypt", [](const KeyPair& k, const std::string& wrapped, const std::string& iv, const std::string& ct) {
        return py::bytes(decrypt_message(CipherEnvelope{wrapped, iv, ct}, k));
      })
      .def("certificate", [](const KeyPair& k, const std::string& subject) {
        return render_certificate_text(issue_certificate(k, subject));
      });

  m.def("verify_certificate", [](const std::string& text) { return verify_certificate(parse_certificate_text(text)); });

  py::class_<Host>(m, "Host")
      .def(py::init([](const std::string& data_dir, std::vector<std::string> bindings, bool auth_required) {
             HostConfig cfg;
             cfg.data_dir = data_dir;
             cfg.auth_required = auth_required;
             for (const auto& b : bindings) cfg.bindings.push_back(BindingConfig::parse(b));
             return std::make_unique<Host>(cfg);
           }),
           py::arg("data_dir"), py::arg("bindings") = std::vector<std::string>{}, py::arg("auth_required") = false)
      .def(
          "create_service",
          [](Host& h, const std::string& descriptor_json, std::optional<py::function> handler,
             const std::string& handler_id) {
            std::shared_ptr<ServiceHandler> impl;
            if (handler) impl = std::make_shared<PyHandler>(*handler);
            py::gil_scoped_release release;
            h.create_service(descriptor_of(descriptor_json), impl, handler_id);
          },
          py::arg("descriptor"), py::arg("handler") = py::none(), py::arg("handler_id") = "")
      .def("remove_service", &Host::remove_service)
      .def("add_user",
           [](Host& h, const std::string& login, const std::string& password, const std::string& device,
              std::set<std::string> services) { h.add_user(UserRecord::create(login, password, device, services)); })
      .def("handle_soap",
           [](Host& h, const std::string& payload, const std::string& path) {
             InboundRequest r;
             r.transport = TransportKind::Http;
             r.method = "POST";
             r.path = path;
             r.headers["content-type"] = "text/xml; charset=utf-8";
             r.payload = payload;
             r.classification = classify_request(r.transport, r.method, r.headers, r.payload);
             OutboundResponse resp;
             {
               py::gil_scoped_release release;
               resp = h.handle_request(r);
             }
             return py::make_tuple(resp.status, resp.body);
           },
           py::arg("payload"), py::arg("path") = "")
      .def("start", &Host::start, py::call_guard<py::gil_scoped_release>())
      .def("shutdown", &Host::shutdown, py::call_guard<py::gil_scoped_release>())
      .def("port", &Host::port)
      .def("services", [](Host& h) {
        std::vector<std::string> names;
        for (const auto& r : h.registry().services()) names.push_back(r->descriptor.service_name);
        return names;
      })
      .def("certificate", [](const Host& h, const std::string& service) -> std::optional<std::string> {
        auto c = h.certificate(service);
        if (!c) return std::nullopt;
        return render_certificate_text(*c);
      })
      .def("metrics", [](const Host& h) {
        py::dict out;
        for (const auto& [name, m] : h.log().metrics_summary()) {
          py::dict d;
          d["count"] = m.count;
          d["mean_duration_micros"] = m.mean_duration_micros;
          d["fault_rate"] = m.fault_rate;
          out[py::str(name)] = d;
        }
        return out;
      });

  m.def(
      "invoke",
      [](const std::string& url, const std::string& method, const std::vector<std::string>& args) {
        py::gil_scoped_release release;
        Endpoint ep = Endpoint::parse(url);
        ServiceDescriptor desc = fetch_descriptor(ep);
        InvokeResult r = invoke(ep, build_call(desc, method, args));
        if (!r.response) throw Error(Errc::MalformedXml, r.parse_error);
        py::gil_scoped_acquire gil;
        return envelope_to_dict(*r.response);
      },
      py::arg("url"), py::arg("method"), py::arg("args") = std::vector<std::string>{});
}

#include "mobilehost/cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mobilehost/client.hpp"
#include "mobilehost/host.hpp"
#include "mobilehost/notes.hpp"
#include "mobilehost/wsdl.hpp"

namespace mobilehost {

namespace fs = std::filesystem;

namespace {

int exit_code_for(Errc c) {
  switch (c) {
    case Errc::IoFailure:
    case Errc::BindFailure:
    case Errc::PeerGone:
    case Errc::Timeout:
    case Errc::CorruptSnapshot:
      return kExitIo;
    default:
      return kExitUsage;
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::set<std::string> split_services(const std::string& list) {
  std::set<std::string> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.insert(item);
  }
  return out;
}

struct ServeOptions {
  std::vector<std::string> binds;
  std::string data_dir = "mobilehost-data";
  std::string wsdl_dir;
  std::string web_root;
  std::string manifest;
  std::string notes_seed;
  std::string advertise;
  bool demo_notes = false;
  bool secure_demo = false;
  bool auth_required = false;
  std::size_t workers = WorkerPool::kDefaultWorkers;
  int key_bits = kDefaultKeyBits;
};

// Blocks SIGINT and SIGTERM in every thread started afterwards and returns
// the set so the caller can sigwait on it.
sigset_t block_termination_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

int cmd_serve(const ServeOptions& o, std::ostream& out) {
  HostConfig cfg;
  for (const auto& b : o.binds.empty() ? std::vector<std::string>{"http://0.0.0.0:5000"} : o.binds) {
    cfg.bindings.push_back(BindingConfig::parse(b));
  }
  cfg.data_dir = o.data_dir;
  if (!o.wsdl_dir.empty()) cfg.wsdl_dir = o.wsdl_dir;
  if (!o.web_root.empty()) cfg.web_root = o.web_root;
  cfg.auth_required = o.auth_required;
  cfg.worker_pool_size = o.workers;
  cfg.key_bits = o.key_bits;
  cfg.advertised_base = o.advertise;

  sigset_t signals = block_termination_signals();
  Host host(cfg);

  if (!o.manifest.empty()) {
    auto j = nlohmann::json::parse(read_text(o.manifest), nullptr, false);
    if (j.is_discarded()) throw Error(Errc::InvalidDescriptor, o.manifest + " is not valid JSON");
    const auto& list = j.is_array() ? j : j.at("services");
    for (const auto& entry : list) {
      ServiceDescriptor desc = descriptor_from_json(entry);
      host.create_service(desc, nullptr, entry.value("handler", "echo"));
    }
  }
  if (o.demo_notes) {
    ServiceDescriptor desc = notes_descriptor();
    desc.security_enabled = o.secure_demo;
    if (o.notes_seed.empty()) {
      host.create_service(desc, nullptr, "notes");
    } else {
      host.create_service(desc, std::make_shared<NotesHandler>(load_notes_seed(o.notes_seed)), "notes");
    }
  }

  host.start();
  for (std::size_t i = 0; i < cfg.bindings.size(); ++i) {
    BindingConfig actual = cfg.bindings[i];
    if (actual.kind != TransportKind::Loopback) actual.port = host.port(i);
    out << "listening on " << actual.url() << "\n";
  }
  for (const auto& rec : host.registry().services()) {
    out << "service " << rec->descriptor.service_name << " at " << host.endpoint_url(rec->descriptor) << "\n";
  }
  out << std::flush;

  int sig = 0;
  sigwait(&signals, &sig);
  host.shutdown();
  out << "stopped\n" << std::flush;
  return kExitOk;
}

struct InvokeArgs {
  std::string url;
  std::string method;
  std::vector<std::string> args;
  std::string wsdl_file;
  std::string cert_file;
  std::string user;
  std::string password;
  std::string device = "cli";
  bool sign = false;
  bool encrypt = false;
  bool raw = false;
};

int cmd_invoke(const InvokeArgs& a, std::ostream& out, std::ostream& err) {
  Endpoint ep = Endpoint::parse(a.url);
  ServiceDescriptor desc = a.wsdl_file.empty() ? fetch_descriptor(ep) : parse_wsdl(read_text(a.wsdl_file));

  SoapCall call;
  if (desc.find_method(a.method)) {
    call = build_call(desc, a.method, a.args);
  } else {
    // Let the host report the unknown method.
    call.operation = {a.method, desc.namespace_uri};
    for (std::size_t i = 0; i < a.args.size(); ++i) {
      call.params.push_back({"arg" + std::to_string(i + 1), TypedValue::string(a.args[i])});
    }
  }

  InvokeOptions opts;
  opts.sign = a.sign;
  opts.service_name = desc.service_name;
  if (!a.user.empty()) opts.auth = AuthHeader{a.user, password_proof(a.password), a.device};
  if (!a.cert_file.empty()) {
    Certificate cert = parse_certificate_text(read_text(a.cert_file));
    if (!verify_certificate(cert)) {
      err << "error: certificate " << a.cert_file << " does not verify\n";
      return kExitUsage;
    }
    opts.verify_with = cert.public_key;
    if (a.encrypt) opts.encrypt_for = cert.public_key;
  } else if (a.encrypt) {
    err << "error: --encrypt needs --cert\n";
    return kExitUsage;
  }

  InvokeResult r = invoke(ep, call, opts);
  if (r.verdict != Verdict::NotChecked) err << "signature verification: " << to_string(r.verdict) << "\n";
  if (a.raw) out << r.reply.body << (r.reply.body.ends_with('\n') ? "" : "\n");
  if (!r.response) {
    err << "error: unreadable response (" << r.parse_error << ")\n";
    return r.verdict == Verdict::Fail ? kExitFault : kExitIo;
  }
  if (const auto* f = std::get_if<SoapFault>(&r.response->body)) {
    err << "fault: " << to_string(f->code) << ": " << f->faultstring << "\n";
    return kExitFault;
  }
  if (const auto* resp = std::get_if<SoapResponseBody>(&r.response->body); resp && !a.raw) {
    out << resp->result.lexical() << "\n";
  }
  return r.verdict == Verdict::Fail ? kExitFault : kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mobile Host: a small SOAP service host and consumer"};
  app.name("mobilehost");
  app.require_subcommand(1);

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run a host until SIGINT or SIGTERM");
  serve_cmd->add_option("--bind", serve.binds, "http://host:port, tcp://host:port or loopback://name (repeatable)");
  serve_cmd->add_option("--data-dir", serve.data_dir, "Registry snapshot and key directory");
  serve_cmd->add_option("--wsdl-dir", serve.wsdl_dir, "Where generated WSDL files go (default <data-dir>/wsdl)");
  serve_cmd->add_option("--web-root", serve.web_root, "Directory served to plain web requests");
  serve_cmd->add_option("--services", serve.manifest, "JSON service manifest");
  serve_cmd->add_flag("--demo-notes", serve.demo_notes, "Register the Note System demo service");
  serve_cmd->add_option("--notes-seed", serve.notes_seed, "Seed file for the demo (student;discipline;label;value)");
  serve_cmd->add_flag("--secure-demo", serve.secure_demo, "Enable message security on the demo service");
  serve_cmd->add_flag("--auth-required", serve.auth_required, "Require an Auth header on every SOAP request");
  serve_cmd->add_option("--workers", serve.workers, "Worker pool size")->check(CLI::PositiveNumber);
  serve_cmd->add_option("--key-bits", serve.key_bits, "RSA key size for new services")
      ->check(CLI::IsMember({2048, 3072, 4096}));
  serve_cmd->add_option("--advertise", serve.advertise, "Base URL written into WSDL addresses");

  InvokeArgs inv;
  auto* invoke_cmd = app.add_subcommand("invoke", "Call a service method");
  invoke_cmd->add_option("url", inv.url, "Service endpoint URL")->required();
  invoke_cmd->add_option("method", inv.method, "Method name")->required();
  invoke_cmd->add_option("args", inv.args, "Positional arguments");
  invoke_cmd->add_option("--wsdl", inv.wsdl_file, "Read the service description from a file instead of ?wsdl");
  invoke_cmd->add_option("--cert", inv.cert_file, "Service certificate; enables response verification");
  invoke_cmd->add_flag("--sign", inv.sign, "Sign the request with a fresh key");
  invoke_cmd->add_flag("--encrypt", inv.encrypt, "Encrypt the request for the --cert key");
  invoke_cmd->add_option("--user", inv.user, "Login for the Auth header");
  invoke_cmd->add_option("--password", inv.password, "Password for the Auth header");
  invoke_cmd->add_option("--device", inv.device, "Device id for the Auth header");
  invoke_cmd->add_flag("--raw", inv.raw, "Print the whole response envelope");

  std::string describe_url;
  auto* describe_cmd = app.add_subcommand("describe", "Print a service's WSDL");
  describe_cmd->add_option("url", describe_url, "Service endpoint URL")->required();

  std::string keygen_service, key_dir = "mobilehost-data";
  bool force = false;
  int keygen_bits = kDefaultKeyBits;
  auto* keygen_cmd = app.add_subcommand("keygen", "Create a keypair and certificate for a service");
  keygen_cmd->add_option("service", keygen_service, "Service name")->required();
  keygen_cmd->add_option("--data-dir", key_dir, "Data directory holding keys/");
  keygen_cmd->add_flag("--force", force, "Replace existing key material");
  keygen_cmd->add_option("--bits", keygen_bits, "RSA key size")->check(CLI::IsMember({2048, 3072, 4096}));

  std::string cert_service, cert_dir = "mobilehost-data";
  auto* cert_cmd = app.add_subcommand("cert", "Certificate commands");
  cert_cmd->require_subcommand(1);
  auto* cert_show = cert_cmd->add_subcommand("show", "Print a service certificate");
  cert_show->add_option("service", cert_service, "Service name")->required();
  cert_show->add_option("--data-dir", cert_dir, "Data directory holding keys/");

  std::string login, password, device = "unknown", services = std::string(kAllServices), users_dir = "mobilehost-data";
  auto* users_cmd = app.add_subcommand("users", "User database commands");
  users_cmd->require_subcommand(1);
  auto* users_add = users_cmd->add_subcommand("add", "Register a consumer");
  users_add->add_option("login", login, "Login name")->required();
  users_add->add_option("--password", password, "Password (stored only as a salted digest)")->required();
  users_add->add_option("--device", device, "Device identifier");
  users_add->add_option("--services", services, "Comma-separated service names, or *");
  users_add->add_option("--data-dir", users_dir, "Data directory holding the snapshot");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*serve_cmd) return cmd_serve(serve, out);
    if (*invoke_cmd) return cmd_invoke(inv, out, err);
    if (*describe_cmd) {
      out << http_get(Endpoint::parse(describe_url), "wsdl");
      return kExitOk;
    }
    if (*keygen_cmd) {
      KeyStore store(fs::path(key_dir) / "keys");
      if (store.exists(keygen_service) && !force) {
        err << "error: key material for " << keygen_service << " exists; use --force to replace it\n";
        return kExitUsage;
      }
      KeyPair key = generate_keypair(keygen_bits);
      store.save(keygen_service, key, issue_certificate(key, "MobileHost/" + keygen_service), force);
      out << "wrote " << store.key_path(keygen_service).string() << "\n";
      out << "wrote " << store.cert_path(keygen_service).string() << "\n";
      return kExitOk;
    }
    if (*cert_show) {
      out << render_certificate_text(KeyStore(fs::path(cert_dir) / "keys").load_certificate(cert_service));
      return kExitOk;
    }
    if (*users_add) {
      auto registry = Registry::load_snapshot(users_dir);
      registry->add_user(UserRecord::create(login, password, device, split_services(services)));
      registry->snapshot(users_dir);
      out << "added user " << login << "\n";
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace mobilehost

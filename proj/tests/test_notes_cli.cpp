#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "generators.hpp"
#include "mobilehost/cli.hpp"
#include "mobilehost/host.hpp"
#include "mobilehost/notes.hpp"

using namespace mobilehost;
namespace mt = mobilehost::testing;

namespace {

const std::string kFig14Result =
    "#A001;D002;LACKS;;0#A001;D002;FINAL TEST;;0#A001;D002;REPLACEMENT;;0#A001;D002;NOTE 3;;98"
    "#A001;D002;NOTE 2;;95#A001;D002;NOTE 1;;100#";

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST(Notes, SeedFileMatchesDefaultSeed) {
  auto path = std::filesystem::path(MOBILEHOST_SOURCE_DIR) / "data" / "notes_seed.txt";
  auto seed = load_notes_seed(path.string());
  EXPECT_EQ(seed, default_notes_seed());
  EXPECT_EQ(render_notes(seed, "A001", "D002"), kFig14Result);
  EXPECT_EQ(parse_notes_seed(render_notes_seed(seed)), seed);
}

TEST(Notes, RenderingRules) {
  const auto& seed = default_notes_seed();
  EXPECT_EQ(render_notes(seed, "ZZZ", "D002"), "#");
  EXPECT_EQ(render_notes(seed, "A001", "D999"), "#");
  std::vector<NoteRecord> one = {{"S", "D", "ONLY", 7}};
  EXPECT_EQ(render_notes(one, "S", "D"), "#S;D;ONLY;;7#");
}

TEST(Notes, SeedParsing) {
  auto recs = parse_notes_seed("# comment\n\nA;B;L;1\r\nA;B;M N;22\n");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[1].label, "M N");
  EXPECT_EQ(recs[1].value, 22);
  for (const char* bad : {"A;B;L", "A;B;L;x", "A;B;L;-1", "A;B;L;1;extra"}) {
    EXPECT_THROW(parse_notes_seed(bad), Error) << bad;
  }
}

TEST(Notes, HandlerRejectsUnknownMethod) {
  NotesHandler h(default_notes_seed());
  std::vector<TypedValue> args = {TypedValue::string("A001"), TypedValue::string("D002")};
  EXPECT_EQ(h.execute_method("obterNotas", args).as_string(), kFig14Result);
  EXPECT_ANY_THROW(h.execute_method("apagarNotas", args));
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"invoke"}).code, 2);
  EXPECT_EQ(cli({"users", "add", "x"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, KeygenAndCertShow) {
  auto dir = mt::temp_dir("cli-keys").string();
  auto first = cli({"keygen", "Svc", "--data-dir", dir});
  ASSERT_EQ(first.code, 0) << first.err;
  auto second = cli({"keygen", "Svc", "--data-dir", dir});
  EXPECT_EQ(second.code, 2);
  EXPECT_NE(second.err.find("--force"), std::string::npos);
  auto shown = cli({"cert", "show", "Svc", "--data-dir", dir});
  ASSERT_EQ(shown.code, 0) << shown.err;
  EXPECT_EQ(mt::match_certificate_template(mt::read_file(mt::test_data("certificate_template.txt")), shown.out), "");
  EXPECT_NE(shown.out.find("SubjectDN: MobileHost/Svc"), std::string::npos);
  EXPECT_EQ(cli({"keygen", "Svc", "--data-dir", dir, "--force"}).code, 0);
  EXPECT_NE(cli({"cert", "show", "Svc", "--data-dir", dir}).out, shown.out);
  EXPECT_EQ(cli({"cert", "show", "Nope", "--data-dir", dir}).code, 3);
}

TEST(Cli, UsersAdd) {
  auto dir = mt::temp_dir("cli-users");
  auto add = cli({"users", "add", "aluno1", "--password", "sentinel-pw", "--services", "A,B", "--data-dir", dir.string()});
  ASSERT_EQ(add.code, 0) << add.err;
  EXPECT_EQ(cli({"users", "add", "aluno1", "--password", "x", "--data-dir", dir.string()}).code, 2);
  auto reg = Registry::load_snapshot(dir);
  EXPECT_EQ(reg->check_access("aluno1", "sentinel-pw", "B"), AccessDecision::Allow);
  EXPECT_EQ(reg->check_access("aluno1", "sentinel-pw", "C"), AccessDecision::Deny);
  EXPECT_EQ(mt::read_file(dir / "users.db").find("sentinel-pw"), std::string::npos);
}

TEST(Cli, InvokeDescribeAndFaults) {
  HostConfig cfg;
  cfg.data_dir = mt::temp_dir("cli-invoke");
  cfg.bindings = {BindingConfig::parse("http://127.0.0.1:0")};
  Host host(cfg);
  host.create_service(notes_descriptor(), nullptr, "notes");
  host.start();
  std::string url = "http://127.0.0.1:" + std::to_string(host.port(0)) + std::string(kNotesPath);

  auto ok = cli({"invoke", url, "obterNotas", "A001", "D002"});
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_EQ(ok.out, kFig14Result + "\n");
  auto arity = cli({"invoke", url, "obterNotas", "A001"});
  EXPECT_EQ(arity.code, 1);
  EXPECT_NE(arity.err.find("fault: Client: arity mismatch"), std::string::npos) << arity.err;
  EXPECT_EQ(cli({"invoke", url, "apagarNotas", "A001"}).code, 1);
  auto described = cli({"describe", url});
  EXPECT_EQ(described.code, 0);
  EXPECT_EQ(parse_wsdl(described.out).service_name, "CadastroEscolar");
  EXPECT_EQ(cli({"invoke", "http://127.0.0.1:1/x", "m"}).code, 3);
}

// A man-in-the-middle flips one byte of each signed response; the client
// must reject it even though the envelope still parses.
TEST(Cli, SignatureVerdictsHonestAndTampered) {
  HostConfig cfg;
  cfg.data_dir = mt::temp_dir("cli-tamper");
  cfg.bindings = {BindingConfig::parse("http://127.0.0.1:0")};
  Host host(cfg);
  ServiceDescriptor secure = notes_descriptor();
  secure.security_enabled = true;
  host.create_service(secure, nullptr, "notes");
  host.start();

  auto cert_file = cfg.data_dir / "service.cert";
  std::ofstream(cert_file) << render_certificate_text(*host.certificate("CadastroEscolar"));

  auto proxy = start_listener(
      BindingConfig::parse("http://127.0.0.1:0"),
      [&](const InboundRequest& req) {
        OutboundResponse r = host.handle_request(req);
        if (auto pos = r.body.find("NOTE 1"); pos != std::string::npos) r.body[pos + 5] = '7';
        return r;
      },
      std::make_shared<WorkerPool>(2));

  std::string honest = "http://127.0.0.1:" + std::to_string(host.port(0)) + std::string(kNotesPath);
  std::string tampered = "http://127.0.0.1:" + std::to_string(proxy->port()) + std::string(kNotesPath);

  for (bool encrypt : {false, true}) {
    std::vector<std::string> extra = {"--cert", cert_file.string(), "--sign"};
    if (encrypt) extra.push_back("--encrypt");
    auto args = [&](const std::string& url) {
      std::vector<std::string> a = {"invoke", url, "obterNotas", "A001", "D002"};
      a.insert(a.end(), extra.begin(), extra.end());
      return a;
    };
    auto good = cli(args(honest));
    EXPECT_EQ(good.code, 0) << good.err;
    EXPECT_NE(good.err.find("signature verification: PASS"), std::string::npos) << good.err;
    EXPECT_EQ(good.out, kFig14Result + "\n");

    auto bad = cli(args(tampered));
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.err.find("signature verification: FAIL"), std::string::npos) << bad.err;
  }
}

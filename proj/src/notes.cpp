#include "mobilehost/notes.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace mobilehost {

std::vector<NoteRecord> parse_notes_seed(std::string_view text) {
  std::vector<NoteRecord> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view() : text.substr(eol + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;

    std::vector<std::string_view> fields;
    for (std::size_t start = 0;;) {
      auto semi = line.find(';', start);
      fields.push_back(line.substr(start, semi - start));
      if (semi == std::string_view::npos) break;
      start = semi + 1;
    }
    auto bad = [&](const std::string& why) {
      return Error(Errc::InvalidArgument, "notes seed line " + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() != 4) throw bad("expected student;discipline;label;value");
    if (fields[0].empty() || fields[1].empty()) throw bad("empty student or discipline code");
    NoteRecord r{std::string(fields[0]), std::string(fields[1]), std::string(fields[2]), 0};
    auto [ptr, ec] = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), r.value);
    if (ec != std::errc() || ptr != fields[3].data() + fields[3].size() || r.value < 0) {
      throw bad("value must be a non-negative integer");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string render_notes_seed(const std::vector<NoteRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.student_code + ";" + r.discipline_code + ";" + r.label + ";" + std::to_string(r.value) + "\n";
  }
  return out;
}

std::vector<NoteRecord> load_notes_seed(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot read notes seed " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_notes_seed(ss.str());
}

const std::vector<NoteRecord>& default_notes_seed() {
  static const std::vector<NoteRecord> seed = {
      {"A001", "D002", "LACKS", 0},  {"A001", "D002", "FINAL TEST", 0}, {"A001", "D002", "REPLACEMENT", 0},
      {"A001", "D002", "NOTE 3", 98}, {"A001", "D002", "NOTE 2", 95},     {"A001", "D002", "NOTE 1", 100},
  };
  return seed;
}

std::string render_notes(const std::vector<NoteRecord>& records, std::string_view student,
                         std::string_view discipline) {
  std::string out = "#";
  for (const auto& r : records) {
    if (r.student_code != student || r.discipline_code != discipline) continue;
    out += r.student_code + ";" + r.discipline_code + ";" + r.label + ";;" + std::to_string(r.value) + "#";
  }
  return out;
}

TypedValue NotesHandler::execute_method(std::string_view method, std::span<const TypedValue> args) {
  if (method != "obterNotas" || args.size() != 2) {
    throw std::invalid_argument("notes service has no method " + std::string(method));
  }
  return TypedValue::string(render_notes(records_, args[0].as_string(), args[1].as_string()));
}

ServiceDescriptor notes_descriptor(std::string_view advertised_base) {
  std::string base(advertised_base);
  while (!base.empty() && base.back() == '/') base.pop_back();
  ServiceDescriptor d;
  d.service_name = std::string(kNotesServiceName);
  d.endpoint_path = std::string(kNotesPath);
  d.namespace_uri = base + d.endpoint_path;
  d.response_namespace_uri = std::string(kNotesResponseNs);
  d.methods = {MethodSignature{"obterNotas",
                               {{"codAluno", XsdType::String}, {"codDisciplina", XsdType::String}},
                               XsdType::String}};
  return d;
}

}  // namespace mobilehost

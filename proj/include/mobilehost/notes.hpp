#pragma once

// The Note System demo: a student-grade lookup exposed as obterNotas.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mobilehost/service_model.hpp"

namespace mobilehost {

struct NoteRecord {
  std::string student_code;
  std::string discipline_code;
  std::string label;
  std::int64_t value = 0;

  friend bool operator==(const NoteRecord&, const NoteRecord&) = default;
};

// One record per line: student;discipline;label;value. Blank lines and
// lines starting with '#' are skipped. Throws Error(InvalidArgument).
std::vector<NoteRecord> parse_notes_seed(std::string_view text);
std::string render_notes_seed(const std::vector<NoteRecord>& records);
std::vector<NoteRecord> load_notes_seed(const std::string& path);
const std::vector<NoteRecord>& default_notes_seed();

// "#s;d;LABEL;;v#...#" over matching records in seed order; "#" when none match.
std::string render_notes(const std::vector<NoteRecord>& records, std::string_view student,
                         std::string_view discipline);

class NotesHandler : public ServiceHandler {
 public:
  explicit NotesHandler(std::vector<NoteRecord> records) : records_(std::move(records)) {}
  TypedValue execute_method(std::string_view method, std::span<const TypedValue> args) override;

 private:
  std::vector<NoteRecord> records_;
};

inline constexpr std::string_view kNotesServiceName = "CadastroEscolar";
inline constexpr std::string_view kNotesPath = "/CadastroEscolar.jws";
inline constexpr std::string_view kNotesResponseNs = "http://www.dee.ufma.br/";

// namespace_uri is advertised_base + endpoint path.
ServiceDescriptor notes_descriptor(std::string_view advertised_base = "http://localhost:5000");

}  // namespace mobilehost

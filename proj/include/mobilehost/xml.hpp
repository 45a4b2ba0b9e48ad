#pragma once

// Minimal namespace-aware XML tree built on expat, plus the canonical form
// used for body signatures and for byte comparison in tests.

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mobilehost::xml {

inline constexpr std::string_view kXmlNamespace = "http://www.w3.org/XML/1998/namespace";

struct NsDecl {
  std::string prefix;  // empty for the default namespace
  std::string uri;
};

struct Attribute {
  std::string prefix;
  std::string local;
  std::string ns;  // resolved; unprefixed attributes have no namespace
  std::string value;

  std::string qualified() const { return prefix.empty() ? local : prefix + ":" + local; }
};

struct Element;

struct Node {
  std::string text;                  // character data when element is null
  std::unique_ptr<Element> element;  // child element

  bool is_text() const { return element == nullptr; }
};

struct Element {
  std::string prefix;
  std::string local;
  std::string ns;
  std::vector<NsDecl> ns_decls;
  std::vector<Attribute> attributes;
  std::vector<Node> children;
  const Element* parent = nullptr;
  // Byte span of the element in the parsed source, start tag to end tag.
  std::size_t source_begin = 0;
  std::size_t source_end = 0;

  std::string qualified() const { return prefix.empty() ? local : prefix + ":" + local; }

  const Attribute* find_attribute(std::string_view ns_uri, std::string_view local_name) const;
  std::vector<const Element*> child_elements() const;
  const Element* first_child(std::string_view ns_uri, std::string_view local_name) const;
  // Concatenation of all descendant character data.
  std::string text_content() const;
  bool has_element_children() const;
  bool has_significant_text() const;
};

// Prefix -> URI bindings visible at some element.
using NsScope = std::map<std::string, std::string>;

struct Document {
  std::string source;
  std::unique_ptr<Element> root;

  // In-scope namespace bindings for `target` inherited from its ancestors
  // (declarations on `target` itself excluded).
  NsScope inherited_scope(const Element& target) const;
  std::string_view source_of(const Element& e) const {
    return std::string_view(source).substr(e.source_begin, e.source_end - e.source_begin);
  }
};

inline constexpr std::size_t kMaxDepth = 256;

// Throws Error(MalformedXml) for anything not well-formed, for DOCTYPE
// declarations, unbound prefixes, and nesting deeper than kMaxDepth.
Document parse(std::string_view text);

std::string escape_text(std::string_view s);
std::string escape_attribute(std::string_view s);

// Deterministic form: no XML declaration, comments or processing
// instructions; whitespace-only text nodes dropped; namespace declarations
// sorted by prefix, then attributes sorted by (namespace URI, local name);
// double-quoted attributes; empty elements written as start/end pairs.
std::string canonicalize(std::string_view text);
std::string canonicalize(const Element& e, const NsScope& inherited = {});

// Resolve a "prefix:local" value (e.g. xsi:type) against the scope of `e`.
struct ResolvedName {
  std::string ns;
  std::string local;
};
std::optional<ResolvedName> resolve_qname_value(const Document& doc, const Element& e,
                                                std::string_view value);

bool is_ncname(std::string_view s);

}  // namespace mobilehost::xml

#include "mobilehost/xml.hpp"

#include <expat.h>

#include <algorithm>
#include <tuple>
#include <utility>

#include "mobilehost/error.hpp"

namespace mobilehost::xml {

namespace {

bool is_xml_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

bool is_whitespace_only(std::string_view s) {
  return std::all_of(s.begin(), s.end(), is_xml_space);
}

std::pair<std::string, std::string> split_qname(std::string_view q) {
  auto colon = q.find(':');
  if (colon == std::string_view::npos) return {std::string(), std::string(q)};
  if (colon == 0 || colon + 1 == q.size() || q.find(':', colon + 1) != std::string_view::npos) {
    throw Error(Errc::MalformedXml, "invalid qualified name '" + std::string(q) + "'");
  }
  return {std::string(q.substr(0, colon)), std::string(q.substr(colon + 1))};
}

struct ParseState {
  XML_Parser parser = nullptr;
  Document* doc = nullptr;
  std::vector<Element*> stack;
  // Flattened prefix bindings; frames record the size at each element start.
  std::vector<NsDecl> bindings;
  std::vector<std::size_t> frames;
  std::vector<std::size_t> start_tag_end;
  std::optional<Error> failure;

  std::optional<std::string> lookup(const std::string& prefix) const {
    if (prefix == "xml") return std::string(kXmlNamespace);
    for (auto it = bindings.rbegin(); it != bindings.rend(); ++it) {
      if (it->prefix == prefix) return it->uri;
    }
    if (prefix.empty()) return std::string();
    return std::nullopt;
  }

  void fail(Errc code, std::string message) {
    if (!failure) failure.emplace(code, std::move(message));
    XML_StopParser(parser, XML_FALSE);
  }
};

void XMLCALL on_start(void* user, const XML_Char* name, const XML_Char** atts) {
  auto* st = static_cast<ParseState*>(user);
  if (st->failure) return;
  try {
    if (st->stack.size() >= kMaxDepth) {
      st->fail(Errc::MalformedXml, "element nesting too deep");
      return;
    }
    auto element = std::make_unique<Element>();
    element->source_begin = static_cast<std::size_t>(XML_GetCurrentByteIndex(st->parser));
    st->start_tag_end.push_back(element->source_begin +
                                static_cast<std::size_t>(XML_GetCurrentByteCount(st->parser)));
    st->frames.push_back(st->bindings.size());

    std::vector<std::pair<std::string, std::string>> raw_attrs;
    for (const XML_Char** a = atts; a && *a; a += 2) {
      std::string_view attr_name = a[0];
      std::string value = a[1];
      if (attr_name == "xmlns") {
        element->ns_decls.push_back({"", value});
      } else if (attr_name.rfind("xmlns:", 0) == 0) {
        std::string prefix(attr_name.substr(6));
        if (prefix.empty() || prefix.find(':') != std::string::npos || value.empty()) {
          st->fail(Errc::MalformedXml, "invalid namespace declaration '" + std::string(attr_name) + "'");
          return;
        }
        if (prefix == "xmlns" || (prefix == "xml" && value != kXmlNamespace)) {
          st->fail(Errc::MalformedXml, "reserved prefix '" + prefix + "' rebound");
          return;
        }
        element->ns_decls.push_back({prefix, value});
      } else {
        raw_attrs.emplace_back(attr_name, std::move(value));
      }
    }
    for (const auto& d : element->ns_decls) st->bindings.push_back(d);

    auto [prefix, local] = split_qname(name);
    if (prefix == "xmlns") {
      st->fail(Errc::MalformedXml, "element uses reserved prefix xmlns");
      return;
    }
    auto uri = st->lookup(prefix);
    if (!uri) {
      st->fail(Errc::MalformedXml, "unbound namespace prefix '" + prefix + "'");
      return;
    }
    element->prefix = std::move(prefix);
    element->local = std::move(local);
    element->ns = std::move(*uri);

    for (auto& [qn, value] : raw_attrs) {
      auto [aprefix, alocal] = split_qname(qn);
      std::string ans;
      if (!aprefix.empty()) {
        auto auri = st->lookup(aprefix);
        if (!auri || auri->empty()) {
          st->fail(Errc::MalformedXml, "unbound attribute prefix '" + aprefix + "'");
          return;
        }
        ans = std::move(*auri);
      }
      for (const auto& existing : element->attributes) {
        if (existing.ns == ans && existing.local == alocal) {
          st->fail(Errc::MalformedXml, "duplicate attribute '" + alocal + "'");
          return;
        }
      }
      element->attributes.push_back({std::move(aprefix), std::move(alocal), std::move(ans), std::move(value)});
    }

    Element* raw = element.get();
    if (st->stack.empty()) {
      st->doc->root = std::move(element);
    } else {
      Element* parent = st->stack.back();
      raw->parent = parent;
      parent->children.push_back(Node{{}, std::move(element)});
    }
    st->stack.push_back(raw);
  } catch (const Error& e) {
    st->fail(e.code(), e.what());
  }
}

void XMLCALL on_end(void* user, const XML_Char*) {
  auto* st = static_cast<ParseState*>(user);
  if (st->failure || st->stack.empty()) return;
  Element* e = st->stack.back();
  auto count = static_cast<std::size_t>(XML_GetCurrentByteCount(st->parser));
  if (count == 0) {
    // Empty-element tag: the end event has no bytes of its own.
    e->source_end = st->start_tag_end.back();
  } else {
    e->source_end = static_cast<std::size_t>(XML_GetCurrentByteIndex(st->parser)) + count;
  }
  st->start_tag_end.pop_back();
  st->bindings.resize(st->frames.back());
  st->frames.pop_back();
  st->stack.pop_back();
}

void XMLCALL on_text(void* user, const XML_Char* s, int len) {
  auto* st = static_cast<ParseState*>(user);
  if (st->failure || st->stack.empty()) return;
  auto& children = st->stack.back()->children;
  if (children.empty() || !children.back().is_text()) children.push_back(Node{});
  children.back().text.append(s, static_cast<std::size_t>(len));
}

void XMLCALL on_doctype(void* user, const XML_Char*, const XML_Char*, const XML_Char*, int) {
  static_cast<ParseState*>(user)->fail(Errc::MalformedXml, "DOCTYPE declarations are not allowed");
}

struct ParserDeleter {
  void operator()(XML_ParserStruct* p) const { XML_ParserFree(p); }
};

void write_canonical(const Element& e, const NsScope* inherited, std::string& out) {
  std::vector<NsDecl> decls = e.ns_decls;
  if (inherited) {
    for (const auto& [prefix, uri] : *inherited) {
      bool redeclared = std::any_of(decls.begin(), decls.end(),
                                    [&](const NsDecl& d) { return d.prefix == prefix; });
      if (!redeclared && !(prefix.empty() && uri.empty())) decls.push_back({prefix, uri});
    }
  }
  std::sort(decls.begin(), decls.end(),
            [](const NsDecl& a, const NsDecl& b) { return a.prefix < b.prefix; });
  std::vector<const Attribute*> attrs;
  attrs.reserve(e.attributes.size());
  for (const auto& a : e.attributes) attrs.push_back(&a);
  std::sort(attrs.begin(), attrs.end(), [](const Attribute* a, const Attribute* b) {
    return std::tie(a->ns, a->local) < std::tie(b->ns, b->local);
  });

  out += '<';
  out += e.qualified();
  for (const auto& d : decls) {
    out += d.prefix.empty() ? " xmlns" : " xmlns:" + d.prefix;
    out += "=\"";
    out += escape_attribute(d.uri);
    out += '"';
  }
  for (const Attribute* a : attrs) {
    out += ' ';
    out += a->qualified();
    out += "=\"";
    out += escape_attribute(a->value);
    out += '"';
  }
  out += '>';
  for (const auto& child : e.children) {
    if (child.is_text()) {
      if (!is_whitespace_only(child.text)) out += escape_text(child.text);
    } else {
      write_canonical(*child.element, nullptr, out);
    }
  }
  out += "</";
  out += e.qualified();
  out += '>';
}

}  // namespace

const Attribute* Element::find_attribute(std::string_view ns_uri, std::string_view local_name) const {
  for (const auto& a : attributes) {
    if (a.ns == ns_uri && a.local == local_name) return &a;
  }
  return nullptr;
}

std::vector<const Element*> Element::child_elements() const {
  std::vector<const Element*> out;
  for (const auto& c : children) {
    if (!c.is_text()) out.push_back(c.element.get());
  }
  return out;
}

const Element* Element::first_child(std::string_view ns_uri, std::string_view local_name) const {
  for (const auto& c : children) {
    if (!c.is_text() && c.element->ns == ns_uri && c.element->local == local_name) return c.element.get();
  }
  return nullptr;
}

std::string Element::text_content() const {
  std::string out;
  for (const auto& c : children) {
    out += c.is_text() ? c.text : c.element->text_content();
  }
  return out;
}

bool Element::has_element_children() const {
  return std::any_of(children.begin(), children.end(), [](const Node& n) { return !n.is_text(); });
}

bool Element::has_significant_text() const {
  return std::any_of(children.begin(), children.end(),
                     [](const Node& n) { return n.is_text() && !is_whitespace_only(n.text); });
}

NsScope Document::inherited_scope(const Element& target) const {
  std::vector<const Element*> chain;
  for (const Element* p = target.parent; p; p = p->parent) chain.push_back(p);
  NsScope scope;
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    for (const auto& d : (*it)->ns_decls) scope[d.prefix] = d.uri;
  }
  return scope;
}

Document parse(std::string_view text) {
  Document doc;
  doc.source = std::string(text);
  std::unique_ptr<XML_ParserStruct, ParserDeleter> parser(XML_ParserCreate("UTF-8"));
  if (!parser) throw Error(Errc::MalformedXml, "could not allocate XML parser");

  ParseState st;
  st.parser = parser.get();
  st.doc = &doc;
  XML_SetUserData(parser.get(), &st);
  XML_SetElementHandler(parser.get(), on_start, on_end);
  XML_SetCharacterDataHandler(parser.get(), on_text);
  XML_SetStartDoctypeDeclHandler(parser.get(), on_doctype);

  auto status = XML_Parse(parser.get(), doc.source.data(), static_cast<int>(doc.source.size()), XML_TRUE);
  if (st.failure) throw *st.failure;
  if (status != XML_STATUS_OK) {
    auto code = XML_GetErrorCode(parser.get());
    throw Error(Errc::MalformedXml, "line " + std::to_string(XML_GetCurrentLineNumber(parser.get())) +
                                        ", column " + std::to_string(XML_GetCurrentColumnNumber(parser.get())) +
                                        ": " + XML_ErrorString(code));
  }
  if (!doc.root) throw Error(Errc::MalformedXml, "no root element");
  return doc;
}

std::string escape_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '\r': out += "&#xD;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string escape_attribute(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '"': out += "&quot;"; break;
      case '\t': out += "&#x9;"; break;
      case '\n': out += "&#xA;"; break;
      case '\r': out += "&#xD;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string canonicalize(std::string_view text) {
  Document doc = parse(text);
  return canonicalize(*doc.root);
}

std::string canonicalize(const Element& e, const NsScope& inherited) {
  std::string out;
  write_canonical(e, &inherited, out);
  return out;
}

std::optional<ResolvedName> resolve_qname_value(const Document& doc, const Element& e,
                                                std::string_view value) {
  auto trimmed = value;
  while (!trimmed.empty() && is_xml_space(trimmed.front())) trimmed.remove_prefix(1);
  while (!trimmed.empty() && is_xml_space(trimmed.back())) trimmed.remove_suffix(1);
  auto colon = trimmed.find(':');
  std::string prefix = colon == std::string_view::npos ? std::string() : std::string(trimmed.substr(0, colon));
  std::string local(colon == std::string_view::npos ? trimmed : trimmed.substr(colon + 1));
  if (local.empty() || !is_ncname(local) || (!prefix.empty() && !is_ncname(prefix))) return std::nullopt;

  for (const auto& d : e.ns_decls) {
    if (d.prefix == prefix) return ResolvedName{d.uri, local};
  }
  NsScope scope = doc.inherited_scope(e);
  if (auto it = scope.find(prefix); it != scope.end()) return ResolvedName{it->second, local};
  if (prefix.empty()) return ResolvedName{"", local};
  return std::nullopt;
}

bool is_ncname(std::string_view s) {
  if (s.empty()) return false;
  auto start_ok = [](unsigned char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_' || c >= 0x80;
  };
  auto rest_ok = [&](unsigned char c) {
    return start_ok(c) || (c >= '0' && c <= '9') || c == '-' || c == '.';
  };
  if (!start_ok(static_cast<unsigned char>(s.front()))) return false;
  return std::all_of(s.begin() + 1, s.end(), [&](char c) { return rest_ok(static_cast<unsigned char>(c)); });
}

}  // namespace mobilehost::xml

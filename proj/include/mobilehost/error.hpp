#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mobilehost {

enum class Errc {
  MalformedXml,
  NotSoap,
  VersionMismatch,
  UnsupportedType,
  InvalidLexical,
  InvalidDescriptor,
  UnknownMethod,
  ArityMismatch,
  TypeMismatch,
  NameMismatch,
  ReturnTypeMismatch,
  UnsupportedWsdl,
  IoFailure,
  DuplicateService,
  PathConflict,
  NotFound,
  CorruptSnapshot,
  DuplicateUser,
  InvalidArgument,
  MalformedSignature,
  DecryptFailure,
  CryptoFailure,
  BindFailure,
  PeerGone,
  Timeout,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message) : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace mobilehost

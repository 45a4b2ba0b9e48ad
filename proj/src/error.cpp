#include "mobilehost/error.hpp"

namespace mobilehost {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::MalformedXml: return "MalformedXml";
    case Errc::NotSoap: return "NotSoap";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::UnsupportedType: return "UnsupportedType";
    case Errc::InvalidLexical: return "InvalidLexical";
    case Errc::InvalidDescriptor: return "InvalidDescriptor";
    case Errc::UnknownMethod: return "UnknownMethod";
    case Errc::ArityMismatch: return "ArityMismatch";
    case Errc::TypeMismatch: return "TypeMismatch";
    case Errc::NameMismatch: return "NameMismatch";
    case Errc::ReturnTypeMismatch: return "ReturnTypeMismatch";
    case Errc::UnsupportedWsdl: return "UnsupportedWsdl";
    case Errc::IoFailure: return "IoFailure";
    case Errc::DuplicateService: return "DuplicateService";
    case Errc::PathConflict: return "PathConflict";
    case Errc::NotFound: return "NotFound";
    case Errc::CorruptSnapshot: return "CorruptSnapshot";
    case Errc::DuplicateUser: return "DuplicateUser";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::MalformedSignature: return "MalformedSignature";
    case Errc::DecryptFailure: return "DecryptFailure";
    case Errc::CryptoFailure: return "CryptoFailure";
    case Errc::BindFailure: return "BindFailure";
    case Errc::PeerGone: return "PeerGone";
    case Errc::Timeout: return "Timeout";
  }
  return "Unknown";
}

}  // namespace mobilehost

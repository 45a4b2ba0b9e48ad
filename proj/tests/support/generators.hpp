#pragma once

// Random inputs shared by the property tests and the acceptance suite.

#include <filesystem>
#include <random>
#include <string>

#include "mobilehost/service_model.hpp"
#include "mobilehost/soap.hpp"

namespace mobilehost::testing {

using Rng = std::mt19937_64;

std::string random_ncname(Rng& rng, std::size_t max_len = 12);
// Printable ASCII, XML specials, whitespace, CR and multi-byte UTF-8.
std::string random_text(Rng& rng, std::size_t max_len = 40);
TypedValue random_value(Rng& rng);
TypedValue random_value_of(Rng& rng, XsdType t);
XsdType random_type(Rng& rng);

SoapEnvelope random_envelope(Rng& rng);
ServiceDescriptor random_descriptor(Rng& rng);

// A fresh, empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

std::string read_file(const std::filesystem::path& p);
std::filesystem::path test_data(const std::string& name);

// Matches rendered certificate text against the golden template, where
// <serial>, <dn>, <date> and <digits> are placeholders and <digits> may span
// several lines. Returns an empty string on success, else the mismatch.
std::string match_certificate_template(const std::string& tmpl, const std::string& text);

// Writes `request` verbatim to 127.0.0.1:port and reads until the peer
// closes. Throws std::runtime_error on socket errors.
std::string raw_exchange(int port, const std::string& request);
// Status code of a raw HTTP response, or -1.
int http_status(const std::string& response);
std::string http_body(const std::string& response);
std::string soap_post(const std::string& path, const std::string& body);

}  // namespace mobilehost::testing

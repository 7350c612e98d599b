#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace dpdl {

// Line-based `key = value` text. Blank lines and lines starting with '#' are
// ignored; duplicate keys are a FormatError.
std::map<std::string, std::string> parse_key_value(const std::string& text);
std::map<std::string, std::string> read_key_value_file(const std::string& path);

double parse_double(const std::string& key, const std::string& value);
long long parse_int(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

}  // namespace dpdl

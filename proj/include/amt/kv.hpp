#pragma once

// Flat key=value text blocks used for configs and checkpoint headers.

#include <map>
#include <string>

namespace amt {

using KeyValues = std::map<std::string, std::string>;

// Blank lines and lines starting with '#' are skipped; whitespace around keys
// and values is trimmed. Malformed lines raise ParseError naming `origin`.
KeyValues parse_key_values(const std::string& text, const std::string& origin = "<text>");
std::string format_key_values(const KeyValues& kv);

// Shortest representation that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& what);
long long parse_int(const std::string& s, const std::string& what);

}  // namespace amt

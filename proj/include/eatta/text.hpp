#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace eatta {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// Strict parsers: the whole (trimmed) text must be consumed.
bool parse_double(std::string_view s, double& out);
bool parse_int(std::string_view s, long long& out);
bool parse_u64(std::string_view s, unsigned long long& out);

}  // namespace eatta

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace fedrn {

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

/// Strict parse of a whole field; throws std::invalid_argument on garbage.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::vector<std::string_view> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

}  // namespace fedrn

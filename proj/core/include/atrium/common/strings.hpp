#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace atrium {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Parses the whole of `text` as a double; std::invalid_argument otherwise.
double parse_double(std::string_view text);

std::vector<std::string> split(std::string_view text, char delimiter);

std::string_view trim(std::string_view text);

}  // namespace atrium

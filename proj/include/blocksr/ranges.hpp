#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace blocksr {

/// Parses a comma-separated list of items, each "a", "a..b" or "a..b:stride".
/// Ranges are inclusive; `default_stride` applies when no stride is given.
/// Throws ParseError (kSyntax) naming `field`.
std::vector<int> parse_int_list(std::string_view text, std::string_view field,
                                int default_stride = 1);

/// Comma-separated real numbers.
std::vector<double> parse_real_list(std::string_view text, std::string_view field);

/// Shortest decimal text that reads back as v.
std::string format_real(double v);

}  // namespace blocksr

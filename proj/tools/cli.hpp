#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace blocksr::cli {

/// Runs one command line (without the program name). Returns 0 on success,
/// 1 when the operation fails and 2 on usage errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace blocksr::cli

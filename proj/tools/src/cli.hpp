#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace headprune::cli {

/// Runs one command line (program name excluded) and returns the process exit status:
/// 0 success, 1 usage, 2 unreadable or malformed input, 3 configuration or dimension
/// mismatch, 4 other runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace headprune::cli

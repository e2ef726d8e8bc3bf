#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hybridpool::cli {

/// Parses `args` (without the program name) and runs one command. Returns
/// the process exit code: 0 success, 2 configuration error, 3 numerical
/// failure. Results without an --out path go to `out`; diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hybridpool::cli

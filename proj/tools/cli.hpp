#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wgmrf::cli {

enum ExitCode { kOk = 0, kInputError = 2, kNumericError = 3, kResourceError = 4 };

/// Parses and runs one command line; never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wgmrf::cli

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dsnot::cli {

enum ExitCode : int {
    kOk = 0,
    kInternalError = 1,
    kUsageError = 2,
    kDataError = 3,
};

// Entry point behind the `dsnot` binary. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace dsnot::cli

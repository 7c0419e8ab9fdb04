#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gridshield::cli {

enum ExitCode : int {
    kSuccess = 0,
    kInputError = 1,
    kInconclusive = 2,
    kDivergence = 3,
};

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gridshield::cli

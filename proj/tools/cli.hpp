#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sicnm::cli {

enum ExitCode : int { kOk = 0, kNotConverged = 2, kInputError = 3 };

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sicnm::cli

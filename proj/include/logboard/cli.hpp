#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace logboard {

/// Exit codes of `ask`: 0 answered, 2 stopped without an answer, 1 error.
inline constexpr int kExitAnswered = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNoAnswer = 2;

/// Entry point behind the logboard executable. `args` excludes argv[0].
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace logboard

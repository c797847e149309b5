#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ctxlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDegenerate = 3;

/// Runs one command line (args[0] is the program name). Diagnostics go to `err`,
/// summaries to `out`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ctxlab::cli

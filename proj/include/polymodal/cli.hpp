#pragma once

// The `polymodal` command line, callable in-process.
//
// Exit codes: 0 success, 1 validation or check failure, 2 usage or config
// error.

#include <iosfwd>
#include <string>
#include <vector>

namespace polymodal {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err);

/// "12845056" -> "12,845,056".
std::string with_thousands(long long value);

}  // namespace polymodal

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ttpmap::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs the `ttpmap` command line. `args` excludes the program name. Returns
/// 0 on success, 1 on a usage error (message and usage on `err`), 2 on a
/// runtime error.
int cli_run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace ttpmap::app

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cellflow/config.hpp"

namespace cellflow::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitEnvironment = 1;
inline constexpr int kExitUsage = 2;

// Runs one `cellflow` invocation. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const config::EnvLookup& env = config::process_env);

}  // namespace cellflow::cli

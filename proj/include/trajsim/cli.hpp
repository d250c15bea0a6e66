#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace trajsim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `trajsim` binary; argv[0] is the program name.
int run(const std::vector<std::string>& argv, std::istream& in, std::ostream& out,
        std::ostream& err);

}  // namespace trajsim::cli

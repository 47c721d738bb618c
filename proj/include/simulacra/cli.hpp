#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace simulacra::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitBackend = 4;

/// Runs one command line (`args[0]` is the program name). Never throws; failures
/// are reported on `err` and mapped to an exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace simulacra::cli

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ivsel::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kSpecError = 2,
  kInfeasible = 3,
  kDegenerate = 4,
  kVerifyFailed = 5,
};

/// Seed used when neither --seed nor IVSEL_SEED is given.
inline constexpr std::uint64_t kDefaultSeed = 20211;

/// Runs the `ivsel` command line; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ivsel::cli

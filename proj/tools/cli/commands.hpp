#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>

namespace uqfire::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Bad flags or configuration; reported with exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// $UQFIRE_OUT if set, otherwise "uqfire_runs". Commands write to
/// <root>/<command> unless --out is given.
std::string default_output_root();

/// Entry point shared by the binary and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace uqfire::cli

#pragma once

// Command-line front end. Exit codes: 0 success, 2 usage, 3 validation,
// 4 derivation failure, 5 verification failure.

#include <iosfwd>
#include <string>
#include <vector>

namespace ksoc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitValidation = 3;
inline constexpr int kExitDerivation = 4;
inline constexpr int kExitVerification = 5;

inline constexpr const char* kSchemaVersion = "ksoc-report/1";

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ksoc::cli

#pragma once

// Command-line front end. Exit codes: 0 pass, 1 a check ran and exceeded its
// tolerance, 2 bad input (arguments, model files, expressions), 3 numeric
// failure at run time.

#include <iosfwd>
#include <string>
#include <vector>

namespace skewalg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitTolerance = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace skewalg::cli

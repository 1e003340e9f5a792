#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hte::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitInternal = 4;

/// Runs one subcommand. `args` excludes the program name. Diagnostics go to
/// `err` as a single line; progress and --help text go to `out`.
int execute(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace hte::cli

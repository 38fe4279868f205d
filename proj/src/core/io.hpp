#pragma once

#include <string>

namespace dnr {

std::string read_file(const std::string& path);

// Writes to a sibling temp file, then renames over the target so readers
// never observe a partial file.
void atomic_write_file(const std::string& path, const std::string& contents);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

// Shortest round-trip decimal form of a double (std::to_chars).
std::string format_double(double v);

}  // namespace dnr

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace alignsim {

// Shortest decimal representation that round-trips the exact double.
std::string format_double(double x);
double parse_double(std::string_view s);

std::string sha256_hex(std::string_view bytes);

// Writes to a temp file in the target directory, then renames into place, so
// readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

}  // namespace alignsim

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace profcct {

// Throws kIo naming the path.
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partial file and a failed write leaves `path` untouched.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace profcct

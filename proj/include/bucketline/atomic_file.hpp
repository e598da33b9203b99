#pragma once

#include <filesystem>
#include <string_view>

namespace bucketline {

// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace bucketline

#pragma once

#include <string>
#include <string_view>

namespace wr {

/// Whole-file read; Error(Io) naming the path on failure.
std::string read_text_file(const std::string& path);

/// Writes to a sibling temporary file, flushes, then renames over `path`.
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace wr

#pragma once

// File helpers shared by the JSONL readers/writers and the CLI.

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace grogu {

// Throws kMissingInput when the file does not exist, kIo on read failure.
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Calls `fn(line, line_number)` for each non-blank line (1-based numbers).
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::string_view, std::size_t)>& fn);

}  // namespace grogu

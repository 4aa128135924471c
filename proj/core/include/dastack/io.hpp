#pragma once

#include <filesystem>
#include <string>

namespace dastack {

/// Reads an entire file into a string. Throws ConfigError if it cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes `content` to `path` atomically: the data lands in a sibling temp file
/// first and is renamed over the destination, so readers never observe a
/// half-written file. Throws ConfigError on any filesystem failure.
void atomic_write(const std::filesystem::path& path, const std::string& content);

/// Formats a double with enough digits to round-trip exactly (shortest form).
std::string format_double(double v);

}  // namespace dastack

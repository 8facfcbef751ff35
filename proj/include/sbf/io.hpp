#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace sbf {

// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

// Writes `contents` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, std::string_view contents);

std::string read_text_file(const std::filesystem::path& path);

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace sbf

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace tseqgan::fs {

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Whole file as bytes; throws FormatError if it cannot be opened.
std::string read_file(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes);
/// 16 lowercase hex digits of fnv1a64 over the file contents.
std::string file_hash(const std::filesystem::path& path);

}  // namespace tseqgan::fs

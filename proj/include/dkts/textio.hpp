#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dkts::textio {

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

/// Strict full-token parses; return false on any trailing garbage.
bool parse_double(std::string_view s, double& out);
bool parse_int(std::string_view s, std::int64_t& out);
bool parse_size(std::string_view s, std::size_t& out);

/// Shortest decimal text that reads back to the identical double.
std::string format_double(double v);

/// Reads the whole file; throws IoError naming the path.
std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename, so readers never see a
/// partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data);

}  // namespace dkts::textio

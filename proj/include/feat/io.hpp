#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace feat::io {

/// Decimal with 17 significant digits; round-trips every finite double.
std::string format_real(double value);

/// Strict parse of a whole token; nullopt on garbage or trailing characters.
std::optional<double> parse_real(std::string_view token);
std::optional<long long> parse_integer(std::string_view token);
std::optional<std::uint64_t> parse_unsigned(std::string_view token);

std::vector<std::string_view> split_whitespace(std::string_view line);
std::vector<std::string_view> split(std::string_view line, char sep);

/// Parses `key=value` tokens of a header line, skipping the first `skip` tokens.
std::map<std::string, std::string> parse_header_keys(std::string_view line, std::size_t skip,
                                                     long line_number);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Git blob object id: SHA-1 of "blob <size>\0<content>", lowercase hex.
std::string git_blob_hash(const std::string& content);

}  // namespace feat::io

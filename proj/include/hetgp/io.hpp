#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hetgp {

/// Shortest-safe text form: 17 significant digits, enough for an exact round trip.
[[nodiscard]] std::string format_double(double value);

/// Parses a full field as a double; returns false on any trailing garbage.
[[nodiscard]] bool parse_double(std::string_view field, double& out);

[[nodiscard]] std::vector<std::string_view> split_csv_line(std::string_view line);

/// Writes a CSV with the given header and rows, creating parent directories.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// Writes `text` verbatim; throws std::runtime_error naming the path on failure.
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Lower-case hex SHA-256 of a file's bytes.
[[nodiscard]] std::string sha256_file(const std::filesystem::path& path);

}  // namespace hetgp

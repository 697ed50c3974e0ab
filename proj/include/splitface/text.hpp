#pragma once

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Small text helpers shared by the file parsers and emitters.
namespace splitface::text {

std::string_view trim(std::string_view s);
/// Splits on `sep`, trimming each field.
std::vector<std::string> split(std::string_view line, char sep);
/// Splits on runs of whitespace.
std::vector<std::string> split_ws(std::string_view line);

std::optional<double> to_double(std::string_view s);
std::optional<long long> to_int(std::string_view s);

/// Shortest decimal text that reads back to the same double.
std::string format_exact(double v);
std::string format_fixed(double v, int decimals);

std::vector<std::string> read_lines(const std::filesystem::path& path);
/// Writes `content` atomically enough for our purposes (truncate + write);
/// raises IoFailure.
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace splitface::text

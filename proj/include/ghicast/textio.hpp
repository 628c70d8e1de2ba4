#pragma once

// Small text helpers shared by the CSV and model-file formats.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ghicast::text {

/// Shortest decimal that parses back to the identical double.
std::string format_double(double value);
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

std::vector<std::string_view> split(std::string_view text, char delimiter);
std::string_view trim(std::string_view text);

}  // namespace ghicast::text

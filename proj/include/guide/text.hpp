#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Small string helpers shared across modules.
namespace guide::text {

std::string_view trim(std::string_view s) noexcept;
std::vector<std::string_view> split_lines(std::string_view s);
std::vector<std::string> split_words(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string to_lower(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix) noexcept;
std::string collapse_whitespace(std::string_view s);

// Number of Unicode code points in a UTF-8 string (invalid bytes count as one each).
std::size_t utf8_length(std::string_view s) noexcept;
// Byte offset of the code point with the given index, or s.size() if past the end.
std::size_t utf8_offset(std::string_view s, std::size_t code_points) noexcept;

// Locates the first balanced {...} block that parses as a JSON object and returns
// its text. String literals are honoured when matching braces.
std::optional<std::string> first_json_object(std::string_view s);

std::string format_fixed(double value, int decimals);

}  // namespace guide::text

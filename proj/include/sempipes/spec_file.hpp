#pragma once

// Reader for the TOML subset used by pipeline spec documents:
//   - comments, bare and quoted keys, dotted keys
//   - basic and literal strings (single-line and triple-quoted)
//   - integers, floats, booleans
//   - arrays (may span lines), inline tables
//   - [table] and [[array.of.tables]] headers
// Dates and times are not supported. The result is a JSON object.

#include <filesystem>
#include <string_view>

#include <nlohmann/json.hpp>

namespace sempipes {

/// Throws ParseError with a line and column on malformed input.
nlohmann::json parse_toml(std::string_view text);
nlohmann::json read_toml(const std::filesystem::path& path);

}  // namespace sempipes

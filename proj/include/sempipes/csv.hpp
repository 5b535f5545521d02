#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>

#include "sempipes/table.hpp"

namespace sempipes {

using KindMap = std::map<std::string, Kind>;

/// RFC-4180 CSV with a mandatory header row. Unquoted empty fields are
/// missing. Kinds are inferred per column unless given in `schema_hint`:
/// all values numeric -> numeric, all "true"/"false" -> boolean, else string.
Table read_csv(const std::filesystem::path& path, const KindMap& schema_hint = {});
Table parse_csv(std::string_view text, const KindMap& schema_hint = {});

void write_csv(std::ostream& out, const Table& t);
void write_csv(const std::filesystem::path& path, const Table& t);

}  // namespace sempipes

#pragma once

// JSON archive of a fitted pipeline. Operator states are stored as source
// text and re-parsed on load.

#include <filesystem>

#include <nlohmann/json.hpp>

#include "sempipes/graph.hpp"

namespace sempipes {

inline constexpr int kArchiveVersion = 1;

nlohmann::json archive_to_json(const FittedPipeline& fp);
/// Throws ConfigError on a malformed archive or a state whose hash does not
/// match its recorded synthesis hash.
FittedPipeline archive_from_json(const nlohmann::json& j);

void save_archive(const FittedPipeline& fp, const std::filesystem::path& path);
FittedPipeline load_archive(const std::filesystem::path& path);

nlohmann::json cell_to_json(const Cell& c);
Cell cell_from_json(const nlohmann::json& j);

}  // namespace sempipes

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dhmbpo/algo/config.hpp"

namespace dhmbpo::analysis {

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

// Flat key = value text. '#' starts a comment, blank lines are skipped and a
// "[section]" line prefixes the keys that follow with "section.".
ConfigEntries parse_config_text(const std::string& text);
ConfigEntries read_config_file(const std::filesystem::path& path);

// "key=value" as given on the command line.
std::pair<std::string, std::string> split_assignment(const std::string& text);

void apply_entries(algo::AlgoConfig& config, const ConfigEntries& entries);

}  // namespace dhmbpo::analysis

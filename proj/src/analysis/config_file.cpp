#include "dhmbpo/analysis/config_file.hpp"

#include <fstream>
#include <sstream>

#include "dhmbpo/core/error.hpp"

namespace dhmbpo::analysis {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

std::pair<std::string, std::string> split_assignment(const std::string& text) {
    const auto eq = text.find('=');
    require(eq != std::string::npos, "expected key=value, got '" + text + "'");
    const std::string key = trim(text.substr(0, eq));
    require(!key.empty(), "empty key in '" + text + "'");
    return {key, trim(text.substr(eq + 1))};
}

ConfigEntries parse_config_text(const std::string& text) {
    ConfigEntries out;
    std::istringstream in(text);
    std::string line, section;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            require(line.back() == ']' && line.size() > 2,
                    "config line " + std::to_string(number) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        require(line.find('=') != std::string::npos,
                "config line " + std::to_string(number) + ": expected key = value");
        auto [key, value] = split_assignment(line);
        out.emplace_back(section.empty() ? key : section + "." + key, value);
    }
    return out;
}

ConfigEntries read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

void apply_entries(algo::AlgoConfig& config, const ConfigEntries& entries) {
    for (const auto& [k, v] : entries) config.set(k, v);
}

}  // namespace dhmbpo::analysis

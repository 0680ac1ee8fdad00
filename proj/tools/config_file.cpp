#include "config_file.hpp"

#include <fstream>

#include "scr/error.hpp"

namespace scr::cli {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(path.string() + ":" + std::to_string(number),
                            "expected key=value, got '" + line + "'");
    }
    auto key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw ValidationError(path.string() + ":" + std::to_string(number), "empty key");
    }
    entries.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  return entries;
}

}  // namespace scr::cli

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace scr::cli {

/// `key = value` lines; `#` starts a comment; blank lines are ignored.
/// Throws scr::IoError when unreadable and scr::ValidationError on a line
/// without `=`.
std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::filesystem::path& path);

}  // namespace scr::cli

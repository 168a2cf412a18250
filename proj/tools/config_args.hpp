#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace advtrain::cli {

/// Turns a config document into `--key=value` arguments. The document is
/// either a JSON object of scalars and arrays (arrays join with commas) or
/// flat `key = value` lines with `#` comments. Underscores in keys become
/// dashes. Throws std::invalid_argument with the line number on bad input.
std::vector<std::string> config_to_args(std::string_view text);
std::vector<std::string> load_config_args(const std::filesystem::path& path);

/// Places the expanded config right after the subcommand so that explicit
/// flags, parsed later, take precedence. `--config` is located in argv.
std::vector<std::string> expand_config(const std::vector<std::string>& argv);

}  // namespace advtrain::cli

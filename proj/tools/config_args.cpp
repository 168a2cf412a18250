#include "config_args.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace advtrain::cli {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::string flag_name(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty() || key == "config") throw std::invalid_argument("config key '" + key + "' is not allowed");
    return "--" + key;
}

std::string scalar_text(const nlohmann::json& v, const std::string& key) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw std::invalid_argument("config key '" + key + "' must be a scalar or a list of scalars");
}

std::vector<std::string> json_to_args(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("malformed JSON config: ") + e.what());
    }
    if (!doc.is_object()) throw std::invalid_argument("JSON config must be an object");
    std::vector<std::string> args;
    for (const auto& [key, value] : doc.items()) {
        std::string joined;
        if (value.is_array()) {
            for (std::size_t i = 0; i < value.size(); ++i) joined += (i ? "," : "") + scalar_text(value[i], key);
        } else {
            joined = scalar_text(value, key);
        }
        args.push_back(flag_name(key) + "=" + joined);
    }
    return args;
}

std::vector<std::string> lines_to_args(std::string_view text) {
    std::vector<std::string> args;
    std::istringstream in{std::string(text)};
    std::string line;
    for (int number = 1; std::getline(in, line); ++number) {
        const auto hash = line.find('#');
        const std::string body = trim(std::string_view(line).substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(number) + ": expected key = value");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        if (key.empty()) throw std::invalid_argument("config line " + std::to_string(number) + ": empty key");
        args.push_back(flag_name(key) + "=" + value);
    }
    return args;
}

}  // namespace

std::vector<std::string> config_to_args(std::string_view text) {
    const std::string t = trim(text);
    if (!t.empty() && t.front() == '{') return json_to_args(t);
    return lines_to_args(text);
}

std::vector<std::string> load_config_args(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return config_to_args(buf.str());
}

std::vector<std::string> expand_config(const std::vector<std::string>& argv) {
    std::vector<std::string> config_paths;
    for (std::size_t i = 0; i < argv.size(); ++i) {
        if (argv[i] == "--config") {
            if (i + 1 >= argv.size()) throw std::invalid_argument("--config needs a path");
            config_paths.push_back(argv[i + 1]);
        } else if (argv[i].rfind("--config=", 0) == 0) {
            config_paths.push_back(argv[i].substr(9));
        }
    }
    if (config_paths.empty()) return argv;
    if (argv.size() < 2 || argv[1].rfind('-', 0) == 0)
        throw std::invalid_argument("the subcommand must come first when --config is used");

    std::vector<std::string> out{argv[0], argv[1]};
    for (const auto& path : config_paths) {
        const auto extra = load_config_args(path);
        out.insert(out.end(), extra.begin(), extra.end());
    }
    out.insert(out.end(), argv.begin() + 2, argv.end());
    return out;
}

}  // namespace advtrain::cli

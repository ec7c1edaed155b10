#include "config_file.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace resdiff::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool given(const std::vector<std::string>& args, const std::string& flag) {
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
        return a == flag || a.rfind(flag + "=", 0) == 0;
    });
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file " + path);
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = trim(line);
        if (line.empty() || line.front() == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(n) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        while (!key.empty() && key.front() == '-') key.erase(0, 1);
        if (val.size() >= 2 && val.front() == '"' && val.back() == '"') val = val.substr(1, val.size() - 2);
        if (key.empty()) throw std::runtime_error(path + ":" + std::to_string(n) + ": empty key");
        out.emplace_back(key, val);
    }
    return out;
}

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty() || args.size() < 2) return args;
    std::vector<std::string> extra;
    for (const auto& [key, val] : read_config_file(path)) {
        if (key == "config") continue;
        const std::string flag = "--" + key;
        if (given(args, flag)) continue;
        if (val == "true") {
            extra.push_back(flag);
        } else if (val != "false") {
            extra.push_back(flag);
            extra.push_back(val);
        }
    }
    std::vector<std::string> out(args.begin(), args.begin() + 2);
    out.insert(out.end(), extra.begin(), extra.end());
    out.insert(out.end(), args.begin() + 2, args.end());
    return out;
}

}  // namespace resdiff::cli

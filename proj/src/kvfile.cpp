#include "npusim/kvfile.hpp"

#include <fstream>
#include <sstream>

#include "npusim/errors.hpp"

namespace npusim {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

} // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected `key = value`, got `" + line + "`");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        }
        kv[key] = value;
    }
    return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_kv_text(buf.str());
}

std::int64_t kv_int(const std::map<std::string, std::string>& kv,
                    const std::string& key, std::int64_t fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stoll(it->second);
    } catch (const std::exception&) {
        throw ConfigError("key `" + key + "`: not an integer: " + it->second);
    }
}

double kv_double(const std::map<std::string, std::string>& kv,
                 const std::string& key, double fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw ConfigError("key `" + key + "`: not a number: " + it->second);
    }
}

std::int64_t kv_int_required(const std::map<std::string, std::string>& kv,
                             const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("missing required key `" + key + "`");
    return kv_int(kv, key, 0);
}

} // namespace npusim

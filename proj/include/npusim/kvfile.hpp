#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace npusim {

// Line-oriented `key = value` config files. '#' starts a comment; blank lines
// are ignored. Used for cost-model constants and model configs.
std::map<std::string, std::string> parse_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text);

std::int64_t kv_int(const std::map<std::string, std::string>& kv,
                    const std::string& key, std::int64_t fallback);
double kv_double(const std::map<std::string, std::string>& kv,
                 const std::string& key, double fallback);

// Same, but the key must be present.
std::int64_t kv_int_required(const std::map<std::string, std::string>& kv,
                             const std::string& key);

} // namespace npusim

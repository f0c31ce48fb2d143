#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "npusim/gpt2.hpp"
#include "npusim/offload.hpp"
#include "npusim/sim.hpp"

namespace npusim {

inline constexpr const char* kToolVersion = "0.1.0";

// Provenance block embedded in every report: identical manifests must yield
// bitwise-identical report bytes.
struct RunManifest {
    std::string subcommand;
    std::vector<std::string> args;
    std::uint64_t seed = 0;
    std::string version = kToolVersion;
    std::map<std::string, std::string> input_digests;  // path -> fnv1a-64 hex

    void add_input(const std::string& path);
};

std::string file_digest_hex(const std::string& path);
std::string digest_hex(std::uint64_t digest);

nlohmann::json to_json(const RunManifest& m);
nlohmann::json to_json(const LinkBytes& b);
nlohmann::json to_json(const SimReport& r);
nlohmann::json to_json(const StageTimings& t);
nlohmann::json to_json(const DivergenceStats& d);
nlohmann::json to_json(const FlopLedger& l);

// Serialize with a trailing newline; field order is alphabetical and stable.
std::string render_report(const nlohmann::json& body);

} // namespace npusim

#include "npusim/report.hpp"

#include <cstdio>
#include <fstream>

#include "npusim/errors.hpp"

namespace npusim {

std::string digest_hex(std::uint64_t digest) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

std::string file_digest_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open input file: " + path);
    std::uint64_t h = 1469598103934665603ULL;
    char c;
    while (in.get(c)) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 1099511628211ULL;
    }
    return digest_hex(h);
}

void RunManifest::add_input(const std::string& path) {
    input_digests[path] = file_digest_hex(path);
}

nlohmann::json to_json(const RunManifest& m) {
    nlohmann::json j;
    j["subcommand"] = m.subcommand;
    j["args"] = m.args;
    j["seed"] = m.seed;
    j["version"] = m.version;
    j["input_digests"] = m.input_digests;
    return j;
}

nlohmann::json to_json(const LinkBytes& b) {
    nlohmann::json j;
    j["a_l3_to_l2"] = b.a_l3_to_l2;
    j["b_l3_to_l2"] = b.b_l3_to_l2;
    j["c_l2_to_l3"] = b.c_l2_to_l3;
    j["a_l2_to_l1"] = b.a_l2_to_l1;
    j["b_l2_to_l1"] = b.b_l2_to_l1;
    j["c_l1_to_l2"] = b.c_l1_to_l2;
    return j;
}

nlohmann::json to_json(const SimReport& r) {
    nlohmann::json j;
    j["total_cycles"] = r.total_cycles;
    j["reconfig_cycles"] = r.reconfig_cycles;
    j["aggregate_utilization"] = r.aggregate_utilization;
    j["model_flops_per_second"] = r.model_flops_per_second;
    j["bytes"] = to_json(r.bytes);
    nlohmann::json cores = nlohmann::json::array();
    for (const CoreStats& c : r.cores) {
        nlohmann::json cj;
        cj["x"] = c.core.x;
        cj["y"] = c.core.y;
        cj["busy_cycles"] = c.busy_cycles;
        cj["utilization"] = c.utilization;
        cores.push_back(cj);
    }
    j["cores"] = cores;
    return j;
}

nlohmann::json to_json(const StageTimings& t) {
    nlohmann::json j;
    j["input_copy"] = t.input_copy;
    j["transpose"] = t.transpose;
    j["kernel"] = t.kernel;
    j["output_copy"] = t.output_copy;
    j["input_sync"] = t.input_sync;
    j["output_sync"] = t.output_sync;
    j["total"] = t.total();
    return j;
}

nlohmann::json to_json(const DivergenceStats& d) {
    nlohmann::json j;
    j["M"] = d.size.M;
    j["K"] = d.size.K;
    j["N"] = d.size.N;
    j["mean_rel"] = d.mean_rel;
    j["max_rel"] = d.max_rel;
    return j;
}

nlohmann::json to_json(const FlopLedger& l) {
    nlohmann::json j;
    nlohmann::json entries = nlohmann::json::array();
    for (const FlopEntry& e : l.entries) {
        nlohmann::json ej;
        ej["name"] = e.name;
        ej["forward"] = e.forward;
        ej["backward"] = e.backward;
        entries.push_back(ej);
    }
    j["entries"] = entries;
    j["gemm_forward"] = l.gemm_forward;
    j["gemm_backward"] = l.gemm_backward;
    j["attention_forward"] = l.attention_forward;
    j["attention_backward"] = l.attention_backward;
    j["other_forward"] = l.other_forward;
    j["other_backward"] = l.other_backward;
    j["forward_total"] = l.forward_total();
    j["backward_total"] = l.backward_total();
    j["step_total"] = l.step_total();
    return j;
}

std::string render_report(const nlohmann::json& body) { return body.dump(2) + "\n"; }

} // namespace npusim

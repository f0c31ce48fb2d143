#include "npusim/cost.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "npusim/errors.hpp"
#include "npusim/kvfile.hpp"

namespace npusim {

namespace {

CostConfig from_kv(const std::map<std::string, std::string>& kv) {
    CostConfig c;
    c.l3_l2_bw = kv_double(kv, "l3_l2_bw_bytes_per_cycle", c.l3_l2_bw);
    c.l2_l1_bw = kv_double(kv, "l2_l1_bw_bytes_per_cycle", c.l2_l1_bw);
    c.dma_setup = kv_int(kv, "dma_setup_cycles", c.dma_setup);
    c.param_write = kv_int(kv, "param_write_cycles", c.param_write);
    c.shim_descriptor = kv_int(kv, "shim_descriptor_cycles", c.shim_descriptor);
    c.core_config = kv_int(kv, "core_config_cycles", c.core_config);
    c.switch_config = kv_int(kv, "switch_config_cycles", c.switch_config);
    c.preamble = kv_int(kv, "preamble_cycles", c.preamble);
    c.postamble = kv_int(kv, "postamble_cycles", c.postamble);
    c.host_copy_bw = kv_double(kv, "host_copy_bw_bytes_per_cycle", c.host_copy_bw);
    c.host_sync = kv_int(kv, "host_sync_cycles", c.host_sync);
    if (c.l3_l2_bw <= 0 || c.l2_l1_bw <= 0 || c.host_copy_bw <= 0) {
        throw ConfigError("bandwidths must be positive");
    }
    return c;
}

} // namespace

CostConfig CostConfig::load(const std::string& path) { return from_kv(parse_kv_file(path)); }

CostConfig CostConfig::from_text(const std::string& text) { return from_kv(parse_kv_text(text)); }

std::string CostConfig::to_text() const {
    std::ostringstream out;
    out << "l3_l2_bw_bytes_per_cycle = " << l3_l2_bw << "\n";
    out << "l2_l1_bw_bytes_per_cycle = " << l2_l1_bw << "\n";
    out << "dma_setup_cycles = " << dma_setup << "\n";
    out << "param_write_cycles = " << param_write << "\n";
    out << "shim_descriptor_cycles = " << shim_descriptor << "\n";
    out << "core_config_cycles = " << core_config << "\n";
    out << "switch_config_cycles = " << switch_config << "\n";
    out << "preamble_cycles = " << preamble << "\n";
    out << "postamble_cycles = " << postamble << "\n";
    out << "host_copy_bw_bytes_per_cycle = " << host_copy_bw << "\n";
    out << "host_sync_cycles = " << host_sync << "\n";
    return out.str();
}

void CostConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << to_text();
}

std::int64_t CostConfig::dma_cycles(std::int64_t bytes, double bw) const {
    return dma_setup + static_cast<std::int64_t>(std::ceil(static_cast<double>(bytes) / bw));
}

} // namespace npusim

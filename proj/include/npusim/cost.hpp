#pragma once

#include <cstdint>
#include <string>

namespace npusim {

// Calibration knobs for the cycle-approximate model. Values come from a
// `key = value` text file; every field has a default.
struct CostConfig {
    double l3_l2_bw = 32.0;              // bytes per cycle, shim <-> memory core
    double l2_l1_bw = 32.0;              // bytes per cycle, memory core <-> compute core
    std::int64_t dma_setup = 50;         // cycles per transfer
    std::int64_t param_write = 10;       // cycles per runtime-parameter word
    std::int64_t shim_descriptor = 500;  // cycles per shim DMA descriptor load
    std::int64_t core_config = 200;      // cycles per full core reconfiguration
    std::int64_t switch_config = 40;     // cycles per stream-switch reconfiguration
    std::int64_t preamble = 8;           // kernel preamble cycles
    std::int64_t postamble = 8;          // kernel postamble cycles
    double host_copy_bw = 32.0;          // bytes per model cycle for host-side copies
    std::int64_t host_sync = 0;          // optional per-dispatch host sync cost

    static CostConfig load(const std::string& path);
    static CostConfig from_text(const std::string& text);
    std::string to_text() const;
    void save(const std::string& path) const;

    std::int64_t dma_cycles(std::int64_t bytes, double bw) const;
};

} // namespace npusim

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace npusim {

enum class CoreKind { shim, memory, compute };

// Grid coordinates: x is the column (0..columns-1), y the row. Row 0 holds the
// shim cores (the main-memory bridge), row 1 the scratchpad memory cores, and
// rows 2.. hold the compute cores, row 2 being the lowest compute row.
struct CoreId {
    int x = 0;
    int y = 0;

    friend bool operator==(CoreId a, CoreId b) { return a.x == b.x && a.y == b.y; }
    friend bool operator<(CoreId a, CoreId b) { return a.y != b.y ? a.y < b.y : a.x < b.x; }
};

inline CoreKind core_kind(CoreId id) {
    if (id.y == 0) return CoreKind::shim;
    if (id.y == 1) return CoreKind::memory;
    return CoreKind::compute;
}

struct MemorySpec {
    std::int64_t l1_bytes = 65536;   // per compute core
    std::int64_t l2_bytes = 524288;  // per memory core
};

struct ComputeSpec {
    int fma_per_cycle = 128;         // bf16 FMAs per cycle per core (4x8x4 micro-tile)
    double clock_hz = 1e9;
    int vmac_latency_cycles = 4;
};

enum class StreamKind { a_tiles, b_tiles, c_tiles };

struct RouteEdge {
    CoreId src;
    CoreId dst;
    StreamKind stream;
};

// Static accelerator description. Routing follows the fixed GEMM design:
// the memory core of column i fans its A stream out to the compute cores of
// hardware row i+2 and its B stream to the compute cores of hardware column i;
// C tiles converge back down each column through the memory core to the shim.
struct Grid {
    int columns = 4;
    int compute_rows = 4;
    MemorySpec mem;
    ComputeSpec compute;
    std::vector<CoreId> cores;
    std::vector<RouteEdge> routes;

    int compute_core_count() const { return columns * compute_rows; }
    int core_count() const { return static_cast<int>(cores.size()); }
};

Grid build_grid(const MemorySpec& mem = MemorySpec{}, const ComputeSpec& compute = ComputeSpec{},
                int columns = 4, int compute_rows = 4);

struct PeakFlops {
    double per_core;    // FLOP/s, 2 FLOPs per FMA
    double aggregate;   // all compute cores
};

PeakFlops peak_flops(const Grid& grid);

// Human-readable key/value + edge-list serialization (CLI `plan --dump-arch`).
std::string dump_arch(const Grid& grid);

} // namespace npusim

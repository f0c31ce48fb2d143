#include "npusim/arch.hpp"

#include <sstream>

namespace npusim {

Grid build_grid(const MemorySpec& mem, const ComputeSpec& compute, int columns, int compute_rows) {
    Grid g;
    g.columns = columns;
    g.compute_rows = compute_rows;
    g.mem = mem;
    g.compute = compute;
    for (int y = 0; y < 2 + compute_rows; ++y) {
        for (int x = 0; x < columns; ++x) {
            g.cores.push_back(CoreId{x, y});
        }
    }
    for (int i = 0; i < columns; ++i) {
        const CoreId shim{i, 0};
        const CoreId memc{i, 1};
        g.routes.push_back({shim, memc, StreamKind::a_tiles});
        g.routes.push_back({shim, memc, StreamKind::b_tiles});
        g.routes.push_back({memc, shim, StreamKind::c_tiles});
        if (i < compute_rows) {
            // A stream of column i feeds every compute core of hardware row i+2.
            for (int x = 0; x < columns; ++x) {
                g.routes.push_back({memc, CoreId{x, i + 2}, StreamKind::a_tiles});
            }
        }
        // B stream of column i feeds every compute core of hardware column i.
        for (int r = 0; r < compute_rows; ++r) {
            g.routes.push_back({memc, CoreId{i, r + 2}, StreamKind::b_tiles});
            g.routes.push_back({CoreId{i, r + 2}, memc, StreamKind::c_tiles});
        }
    }
    return g;
}

PeakFlops peak_flops(const Grid& grid) {
    PeakFlops p;
    p.per_core = 2.0 * grid.compute.fma_per_cycle * grid.compute.clock_hz;
    p.aggregate = p.per_core * grid.compute_core_count();
    return p;
}

namespace {

const char* kind_name(CoreKind k) {
    switch (k) {
        case CoreKind::shim: return "shim";
        case CoreKind::memory: return "memory";
        default: return "compute";
    }
}

const char* stream_name(StreamKind s) {
    switch (s) {
        case StreamKind::a_tiles: return "A";
        case StreamKind::b_tiles: return "B";
        default: return "C";
    }
}

} // namespace

std::string dump_arch(const Grid& grid) {
    std::ostringstream out;
    const PeakFlops p = peak_flops(grid);
    out << "columns = " << grid.columns << "\n";
    out << "compute_rows = " << grid.compute_rows << "\n";
    out << "cores = " << grid.core_count() << "\n";
    out << "compute_cores = " << grid.compute_core_count() << "\n";
    out << "l1_bytes = " << grid.mem.l1_bytes << "\n";
    out << "l2_bytes = " << grid.mem.l2_bytes << "\n";
    out << "fma_per_cycle = " << grid.compute.fma_per_cycle << "\n";
    out << "clock_hz = " << grid.compute.clock_hz << "\n";
    out << "vmac_latency_cycles = " << grid.compute.vmac_latency_cycles << "\n";
    out << "peak_flops_per_core = " << p.per_core << "\n";
    out << "peak_flops_aggregate = " << p.aggregate << "\n";
    for (const CoreId& c : grid.cores) {
        out << "core (" << c.x << "," << c.y << ") " << kind_name(core_kind(c)) << "\n";
    }
    for (const RouteEdge& e : grid.routes) {
        out << "route " << stream_name(e.stream)
            << " (" << e.src.x << "," << e.src.y << ") -> (" << e.dst.x << "," << e.dst.y << ")\n";
    }
    return out.str();
}

} // namespace npusim

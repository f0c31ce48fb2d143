#include "npusim/plan.hpp"

#include <sstream>

#include "npusim/errors.hpp"

namespace npusim {

namespace {

std::int64_t round_up(std::int64_t v, std::int64_t quantum) {
    return (v + quantum - 1) / quantum * quantum;
}

void check_column(const TilingPlan& plan, int column) {
    if (column < 0 || column >= plan.columns) {
        throw ColumnOutOfRange("column " + std::to_string(column) + " not in [0, " +
                               std::to_string(plan.columns) + ")");
    }
}

} // namespace

TilingPlan plan(const ProblemSize& problem, const TileShape& tile, const Grid& grid) {
    if (problem.M < 1 || problem.K < 1 || problem.N < 1) {
        throw ShapeMismatch("problem dimensions must be >= 1");
    }
    if (tile.m % 4 != 0 || tile.k % 8 != 0 || tile.n % 4 != 0 || tile.m < 4 || tile.k < 8 || tile.n < 4) {
        throw MisalignedTile("tile dims must satisfy m % 4 == 0, k % 8 == 0, n % 4 == 0");
    }
    if (tile.l1_footprint_bytes() > grid.mem.l1_bytes) {
        throw TileTooLarge("double-buffered tile footprint " +
                           std::to_string(tile.l1_footprint_bytes()) + " bytes exceeds L1 capacity " +
                           std::to_string(grid.mem.l1_bytes));
    }
    if (grid.columns != 4 || grid.compute_rows != 4) {
        throw ShapeMismatch("the GEMM mapping is designed for a 4x4 compute array");
    }

    TilingPlan p;
    p.original = problem;
    p.tile = tile;
    p.columns = grid.columns;
    const std::int64_t c = grid.columns;
    p.problem.M = round_up(problem.M, c * tile.m);
    p.problem.K = round_up(problem.K, tile.k);
    p.problem.N = round_up(problem.N, c * tile.n);
    p.padding.pad_m = p.problem.M - problem.M;
    p.padding.pad_k = p.problem.K - problem.K;
    p.padding.pad_n = p.problem.N - problem.N;
    p.acc_depth = p.problem.K / tile.k;
    p.out_tiles = (p.problem.M / tile.m) * (p.problem.N / tile.n);
    p.runtime_params = {p.acc_depth, p.out_tiles};
    p.repeat_a = p.problem.N / (c * tile.n);
    p.repeat_b = p.problem.M / (c * tile.m);
    return p;
}

std::vector<TileCoord> shim_stream_sequence(const TilingPlan& plan, int column, Operand op) {
    check_column(plan, column);
    std::vector<TileCoord> seq;
    const std::int64_t kb = plan.k_blocks();
    if (op == Operand::A) {
        seq.reserve(plan.repeat_b * plan.repeat_a * kb);
        for (std::int64_t j = 0; j < plan.repeat_b; ++j) {
            for (std::int64_t rep = 0; rep < plan.repeat_a; ++rep) {
                for (std::int64_t kk = 0; kk < kb; ++kk) {
                    seq.push_back({Operand::A, column + 4 * j, kk});
                }
            }
        }
    } else if (op == Operand::B) {
        seq.reserve(plan.repeat_b * plan.repeat_a * kb);
        for (std::int64_t rep = 0; rep < plan.repeat_b; ++rep) {
            for (std::int64_t j = 0; j < plan.repeat_a; ++j) {
                for (std::int64_t kk = 0; kk < kb; ++kk) {
                    seq.push_back({Operand::B, kk, column + 4 * j});
                }
            }
        }
    } else {
        throw ShapeMismatch("shim streams carry A or B tiles only");
    }
    return seq;
}

std::vector<TileCoord> shim_stream_sequence(const TilingPlan& plan, int column) {
    std::vector<TileCoord> seq = shim_stream_sequence(plan, column, Operand::A);
    const std::vector<TileCoord> b = shim_stream_sequence(plan, column, Operand::B);
    seq.insert(seq.end(), b.begin(), b.end());
    return seq;
}

std::array<CoreId, 4> distribute_map(const TilingPlan& plan, int mem_column, Operand op) {
    check_column(plan, mem_column);
    std::array<CoreId, 4> map{};
    for (int t = 0; t < 4; ++t) {
        if (op == Operand::A) {
            map[t] = CoreId{t, mem_column + 2};
        } else if (op == Operand::B) {
            map[t] = CoreId{mem_column, 2 + t};
        } else {
            throw ShapeMismatch("distribute handles A and B streams only");
        }
    }
    return map;
}

JoinMap join_map(const TilingPlan& plan, int mem_column) {
    check_column(plan, mem_column);
    JoinMap j;
    j.mem_column = mem_column;
    for (int t = 0; t < 4; ++t) j.slot_core[t] = CoreId{mem_column, 2 + t};
    j.block_rows = 4 * plan.tile.m;
    j.block_cols = plan.tile.n;
    j.block_count = plan.repeat_b * plan.repeat_a;
    return j;
}

std::pair<std::int64_t, std::int64_t> join_block_origin(const TilingPlan& plan,
                                                        int mem_column, std::int64_t e) {
    check_column(plan, mem_column);
    const std::int64_t j = e / plan.repeat_a;
    const std::int64_t jp = e % plan.repeat_a;
    return {4 * j * plan.tile.m, (mem_column + 4 * jp) * plan.tile.n};
}

std::pair<std::int64_t, std::int64_t> core_output_block(const TilingPlan& plan,
                                                        CoreId core, std::int64_t e) {
    const std::int64_t j = e / plan.repeat_a;
    const std::int64_t jp = e % plan.repeat_a;
    return {(core.y - 2) + 4 * j, core.x + 4 * jp};
}

std::pair<TileCoord, TileCoord> core_pair_coords(const TilingPlan& plan,
                                                 CoreId core, std::int64_t s) {
    const std::int64_t kb = plan.k_blocks();
    const std::int64_t kk = s % kb;
    const auto [rowblk, colblk] = core_output_block(plan, core, s / kb);
    return {TileCoord{Operand::A, rowblk, kk}, TileCoord{Operand::B, kk, colblk}};
}

std::string plan_summary(const TilingPlan& p) {
    std::ostringstream out;
    out << "problem = " << p.original.M << "x" << p.original.K << "x" << p.original.N << "\n";
    out << "padded = " << p.problem.M << "x" << p.problem.K << "x" << p.problem.N << "\n";
    out << "pad_m = " << p.padding.pad_m << "\n";
    out << "pad_k = " << p.padding.pad_k << "\n";
    out << "pad_n = " << p.padding.pad_n << "\n";
    out << "tile = " << p.tile.m << "x" << p.tile.k << "x" << p.tile.n << "\n";
    out << "acc_depth = " << p.acc_depth << "\n";
    out << "out_tiles = " << p.out_tiles << "\n";
    out << "runtime_param_acc = " << p.runtime_params[0] << "\n";
    out << "runtime_param_out = " << p.runtime_params[1] << "\n";
    out << "repeat_a = " << p.repeat_a << "\n";
    out << "repeat_b = " << p.repeat_b << "\n";
    out << "l1_footprint_bytes = " << p.tile.l1_footprint_bytes() << "\n";
    for (int col = 0; col < p.columns; ++col) {
        for (Operand op : {Operand::A, Operand::B}) {
            const auto seq = shim_stream_sequence(p, col, op);
            const char name = op == Operand::A ? 'A' : 'B';
            out << "shim " << col << " " << name << " transfers = " << seq.size() << "\n";
            out << "shim " << col << " " << name << " first = (" << seq.front().row_block
                << "," << seq.front().col_block << ")\n";
            out << "shim " << col << " " << name << " last = (" << seq.back().row_block
                << "," << seq.back().col_block << ")\n";
        }
    }
    return out.str();
}

std::string emit_schedule(const TilingPlan& p) {
    std::ostringstream out;
    for (int col = 0; col < p.columns; ++col) {
        for (const TileCoord& t : shim_stream_sequence(p, col)) {
            out << "SHIM " << col << " " << (t.op == Operand::A ? 'A' : 'B') << " "
                << t.row_block << " " << t.col_block << "\n";
        }
    }
    return out.str();
}

} // namespace npusim

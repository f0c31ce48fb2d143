#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "npusim/arch.hpp"

namespace npusim {

struct ProblemSize {
    std::int64_t M = 0;
    std::int64_t K = 0;
    std::int64_t N = 0;

    friend bool operator==(const ProblemSize& a, const ProblemSize& b) {
        return a.M == b.M && a.K == b.K && a.N == b.N;
    }
    friend bool operator<(const ProblemSize& a, const ProblemSize& b) {
        return std::tie(a.M, a.K, a.N) < std::tie(b.M, b.K, b.N);
    }
};

struct TileShape {
    std::int64_t m = 64;
    std::int64_t k = 64;
    std::int64_t n = 32;

    friend bool operator==(const TileShape& a, const TileShape& b) {
        return a.m == b.m && a.k == b.k && a.n == b.n;
    }

    // Double-buffered per-core working set: two A tiles (bf16), two B tiles
    // (bf16), two C tiles (f32).
    std::int64_t l1_footprint_bytes() const {
        return 2 * (m * k * 2 + k * n * 2 + m * n * 4);
    }
};

struct PaddingRecord {
    std::int64_t pad_m = 0;
    std::int64_t pad_k = 0;
    std::int64_t pad_n = 0;
};

enum class Operand { A, B, C };

struct TileCoord {
    Operand op;
    std::int64_t row_block;
    std::int64_t col_block;

    friend bool operator==(const TileCoord& a, const TileCoord& b) {
        return a.op == b.op && a.row_block == b.row_block && a.col_block == b.col_block;
    }
};

// Complete static mapping of one GEMM onto the array. Sizes inside `problem`
// are padded; `original` keeps what the caller asked for.
struct TilingPlan {
    ProblemSize problem;
    ProblemSize original;
    TileShape tile;
    PaddingRecord padding;
    std::int64_t acc_depth = 0;                    // K/k input-tile pairs per output tile
    std::int64_t out_tiles = 0;                    // (M/m) * (N/n)
    std::array<std::int64_t, 2> runtime_params{};  // the two per-core values: {K/k, M*N/(m*n)}
    std::int64_t repeat_a = 0;                     // N/(4n): times each A row of tiles is re-sent
    std::int64_t repeat_b = 0;                     // M/(4m): times the whole B sequence is re-sent
    int columns = 4;

    std::int64_t row_blocks() const { return problem.M / tile.m; }
    std::int64_t col_blocks() const { return problem.N / tile.n; }
    std::int64_t k_blocks() const { return problem.K / tile.k; }
    std::int64_t out_tiles_per_core() const { return out_tiles / (columns * columns); }
    // Lockstep stream length per column: every compute core consumes this many
    // (A, B) tile pairs.
    std::int64_t pairs_per_core() const { return repeat_b * repeat_a * k_blocks(); }
};

TilingPlan plan(const ProblemSize& problem, const TileShape& tile, const Grid& grid);

// Per-shim transfer order for one operand stream. For A (shim column i):
// row block i+4j, all K/k column blocks in order, that row of tiles repeated
// N/(4n) times before advancing j. For B (shim column i): column block i+4j',
// all K/k row blocks in order, the whole sequence repeated M/(4m) times.
std::vector<TileCoord> shim_stream_sequence(const TilingPlan& plan, int column, Operand op);
// Both streams, A first then B (interleaving is the simulator's choice).
std::vector<TileCoord> shim_stream_sequence(const TilingPlan& plan, int column);

// Service-order assignment of the four tiles of an L2 block to the compute
// cores of the fan-out: A block tile t -> core (x=t, y=mem_column+2),
// B block tile t -> core (x=mem_column, y=2+t). Data delivery is a broadcast
// along the row/column; this map fixes which core the t-th tile services
// first in the rotation.
std::array<CoreId, 4> distribute_map(const TilingPlan& plan, int mem_column, Operand op);

// Output join: the four compute cores of hardware column i stack their m x n
// output tiles into a (4m) x n block, slot t = y-2 occupying rows
// [t*m, (t+1)*m) of the block.
struct JoinMap {
    int mem_column = 0;
    std::array<CoreId, 4> slot_core;  // slot t -> producing core
    std::int64_t block_rows = 0;      // 4m
    std::int64_t block_cols = 0;      // n
    std::int64_t block_count = 0;     // joined blocks this column produces
};

JoinMap join_map(const TilingPlan& plan, int mem_column);

// Element origin of joined block e of a column: C rows [4jm, 4jm+4m),
// C columns [(i+4j')n, (i+4j'+1)n) with j = e / repeat_a, j' = e % repeat_a.
std::pair<std::int64_t, std::int64_t> join_block_origin(const TilingPlan& plan,
                                                        int mem_column, std::int64_t e);

// Work assignment implied by the lockstep streams. Output event e of compute
// core (x, y) is C tile (row_block, col_block) =
// ((y-2) + 4*(e / repeat_a), x + 4*(e % repeat_a)).
std::pair<std::int64_t, std::int64_t> core_output_block(const TilingPlan& plan,
                                                        CoreId core, std::int64_t e);

// The (A, B) tile pair a core consumes at lockstep position s.
std::pair<TileCoord, TileCoord> core_pair_coords(const TilingPlan& plan,
                                                 CoreId core, std::int64_t s);

std::string plan_summary(const TilingPlan& plan);

// `SHIM <col> <A|B> <rowblk> <colblk>` lines for all columns.
std::string emit_schedule(const TilingPlan& plan);

} // namespace npusim

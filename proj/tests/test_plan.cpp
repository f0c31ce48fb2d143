#include <doctest.h>

#include <set>

#include "npusim/errors.hpp"
#include "npusim/plan.hpp"
#include "npusim/rng.hpp"

using namespace npusim;

namespace {

const Grid kGrid = build_grid();

TilingPlan make(std::int64_t M, std::int64_t K, std::int64_t N, TileShape t = TileShape{}) {
    return plan(ProblemSize{M, K, N}, t, kGrid);
}

} // namespace

TEST_SUITE("plan") {

TEST_CASE("gpt2 logits-gradient size pads M only, to 50432") {
    const TilingPlan p = make(50304, 256, 768);
    CHECK(p.problem.M == 50432);
    CHECK(p.problem.K == 256);
    CHECK(p.problem.N == 768);
    CHECK(p.padding.pad_m == 128);
    CHECK(p.padding.pad_k == 0);
    CHECK(p.padding.pad_n == 0);
}

TEST_CASE("aligned sizes need no padding") {
    const TilingPlan p = make(256, 768, 2304);
    CHECK(p.padding.pad_m == 0);
    CHECK(p.padding.pad_k == 0);
    CHECK(p.padding.pad_n == 0);
    CHECK(p.acc_depth == 12);
    CHECK(p.out_tiles == 4 * 72);
    CHECK(p.repeat_a == 18);
    CHECK(p.repeat_b == 1);
}

TEST_CASE("padding quanta are 4m, k, 4n") {
    const TilingPlan p = make(1, 1, 1);
    CHECK(p.problem.M == 256);
    CHECK(p.problem.K == 64);
    CHECK(p.problem.N == 128);
    CHECK(p.original.M == 1);
}

TEST_CASE("runtime parameters are K/k and padded MN/(mn)") {
    const TilingPlan p = make(512, 512, 512);
    CHECK(p.runtime_params[0] == 8);
    CHECK(p.runtime_params[1] == (512 / 64) * (512 / 32));
    CHECK(p.pairs_per_core() == p.repeat_b * p.repeat_a * p.k_blocks());
    CHECK(p.out_tiles_per_core() * 16 == p.out_tiles);
}

TEST_CASE("default tile double-buffers within L1") {
    const TileShape t;
    CHECK(t.l1_footprint_bytes() == 40960);
    CHECK(t.l1_footprint_bytes() <= kGrid.mem.l1_bytes);
}

TEST_CASE("tile at exactly L1 capacity is accepted") {
    const TileShape t{64, 64, 64};
    CHECK(t.l1_footprint_bytes() == 65536);
    CHECK_NOTHROW(make(256, 256, 256, t));
}

TEST_CASE("oversized and misaligned tiles are typed errors") {
    CHECK_THROWS_AS(make(256, 256, 256, TileShape{96, 96, 96}), TileTooLarge);
    CHECK_THROWS_AS(make(256, 256, 256, TileShape{62, 64, 32}), MisalignedTile);
    CHECK_THROWS_AS(make(256, 256, 256, TileShape{64, 60, 32}), MisalignedTile);
    CHECK_THROWS_AS(make(256, 256, 256, TileShape{64, 64, 30}), MisalignedTile);
    CHECK_THROWS_AS(make(0, 256, 256), ShapeMismatch);
}

TEST_CASE("mapping requires the 4x4 compute array") {
    const Grid small = build_grid(MemorySpec{}, ComputeSpec{}, 2, 2);
    CHECK_THROWS_AS(plan(ProblemSize{256, 256, 256}, TileShape{}, small), ShapeMismatch);
}

TEST_CASE("A shim stream walks a row of tiles, repeated per B pass") {
    const TilingPlan p = make(512, 512, 512);  // repeat_b=2, repeat_a=4, k_blocks=8
    const auto seq = shim_stream_sequence(p, 1, Operand::A);
    REQUIRE(seq.size() == static_cast<std::size_t>(p.pairs_per_core()));
    // First repeat_a * k_blocks entries stay on row block 1 (column + 4*0).
    for (std::int64_t s = 0; s < p.repeat_a * p.k_blocks(); ++s) {
        CHECK(seq[static_cast<std::size_t>(s)].row_block == 1);
        CHECK(seq[static_cast<std::size_t>(s)].col_block == s % p.k_blocks());
    }
    // Then the stream advances to row block 1 + 4.
    CHECK(seq[static_cast<std::size_t>(p.repeat_a * p.k_blocks())].row_block == 5);
    CHECK(seq.back().row_block == 5);
    CHECK(seq.back().col_block == p.k_blocks() - 1);
}

TEST_CASE("B shim stream repeats the whole column sweep") {
    const TilingPlan p = make(512, 512, 512);
    const auto seq = shim_stream_sequence(p, 2, Operand::B);
    REQUIRE(seq.size() == static_cast<std::size_t>(p.pairs_per_core()));
    const std::int64_t half = p.repeat_a * p.k_blocks();
    for (std::int64_t s = 0; s < half; ++s) {
        // Second pass replays the first exactly.
        CHECK(seq[static_cast<std::size_t>(s)].col_block ==
              seq[static_cast<std::size_t>(s + half)].col_block);
        CHECK(seq[static_cast<std::size_t>(s)].row_block ==
              seq[static_cast<std::size_t>(s + half)].row_block);
    }
    CHECK(seq[0].col_block == 2);
    CHECK(seq[static_cast<std::size_t>(p.k_blocks())].col_block == 6);
}

TEST_CASE("lockstep invariant: shim streams serve every core of their fan-out") {
    Rng rng(7);
    for (int trial = 0; trial < 8; ++trial) {
        const std::int64_t M = rng.uniform_int(1, 700);
        const std::int64_t K = rng.uniform_int(1, 400);
        const std::int64_t N = rng.uniform_int(1, 700);
        const TilingPlan p = make(M, K, N);
        for (int col = 0; col < 4; ++col) {
            const auto a_seq = shim_stream_sequence(p, col, Operand::A);
            const auto b_seq = shim_stream_sequence(p, col, Operand::B);
            for (std::int64_t s = 0; s < p.pairs_per_core(); s += 3) {
                for (int t = 0; t < 4; ++t) {
                    const CoreId row_core{t, col + 2};   // consumes this column's A stream
                    const CoreId col_core{col, 2 + t};   // consumes this column's B stream
                    CHECK(core_pair_coords(p, row_core, s).first ==
                          a_seq[static_cast<std::size_t>(s)]);
                    CHECK(core_pair_coords(p, col_core, s).second ==
                          b_seq[static_cast<std::size_t>(s)]);
                }
            }
        }
    }
}

TEST_CASE("output blocks cover the C grid exactly once") {
    const TilingPlan p = make(300, 100, 500);
    std::set<std::pair<std::int64_t, std::int64_t>> seen;
    for (int y = 2; y <= 5; ++y) {
        for (int x = 0; x < 4; ++x) {
            for (std::int64_t e = 0; e < p.repeat_b * p.repeat_a; ++e) {
                const auto blk = core_output_block(p, CoreId{x, y}, e);
                CHECK(seen.insert(blk).second);
                CHECK(blk.first < p.row_blocks());
                CHECK(blk.second < p.col_blocks());
            }
        }
    }
    CHECK(seen.size() == static_cast<std::size_t>(p.out_tiles));
}

TEST_CASE("distribute map: A by row, B by column, service order by slot") {
    const TilingPlan p = make(256, 64, 128);
    const auto a_map = distribute_map(p, 2, Operand::A);
    const auto b_map = distribute_map(p, 2, Operand::B);
    for (int t = 0; t < 4; ++t) {
        CHECK(a_map[static_cast<std::size_t>(t)] == CoreId{t, 4});
        CHECK(b_map[static_cast<std::size_t>(t)] == CoreId{2, 2 + t});
    }
    CHECK_THROWS_AS(distribute_map(p, 4, Operand::A), ColumnOutOfRange);
}

TEST_CASE("join stacks the column's four tiles into a 4m x n block") {
    const TilingPlan p = make(512, 128, 256);
    const JoinMap j = join_map(p, 1);
    CHECK(j.block_rows == 4 * p.tile.m);
    CHECK(j.block_cols == p.tile.n);
    CHECK(j.block_count == p.repeat_b * p.repeat_a);
    for (std::int64_t e = 0; e < j.block_count; ++e) {
        const auto [row0, col0] = join_block_origin(p, 1, e);
        for (int t = 0; t < 4; ++t) {
            const auto blk = core_output_block(p, j.slot_core[static_cast<std::size_t>(t)], e);
            CHECK(blk.first * p.tile.m == row0 + t * p.tile.m);
            CHECK(blk.second * p.tile.n == col0);
        }
    }
}

TEST_CASE("schedule dump format is SHIM col op rowblk colblk") {
    const TilingPlan p = make(256, 64, 128);
    const std::string text = emit_schedule(p);
    CHECK(text.rfind("SHIM 0 A 0 0\n", 0) == 0);
    CHECK(text.find("SHIM 3 B 0 3\n") != std::string::npos);
    std::size_t lines = 0;
    for (char c : text) lines += c == '\n';
    CHECK(lines == static_cast<std::size_t>(4 * 2 * p.pairs_per_core()));
}

TEST_CASE("summary prints padded sizes and per-shim endpoints") {
    const TilingPlan p = make(50304, 256, 768);
    const std::string s = plan_summary(p);
    CHECK(s.find("pad_m = 128") != std::string::npos);
    CHECK(s.find("padded = 50432x256x768") != std::string::npos);
    CHECK(s.find("shim 0 A transfers = ") != std::string::npos);
    CHECK(s.find("shim 3 B last = ") != std::string::npos);
}

}

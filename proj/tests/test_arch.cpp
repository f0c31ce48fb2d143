#include <doctest.h>

#include <set>

#include "npusim/arch.hpp"

using namespace npusim;

TEST_SUITE("arch") {

TEST_CASE("default grid has 4 shims, 4 memory cores, 16 compute cores") {
    const Grid g = build_grid();
    CHECK(g.columns == 4);
    CHECK(g.compute_rows == 4);
    CHECK(g.core_count() == 24);
    CHECK(g.compute_core_count() == 16);
    int shims = 0, mems = 0, computes = 0;
    for (CoreId c : g.cores) {
        switch (core_kind(c)) {
            case CoreKind::shim: ++shims; break;
            case CoreKind::memory: ++mems; break;
            case CoreKind::compute: ++computes; break;
        }
    }
    CHECK(shims == 4);
    CHECK(mems == 4);
    CHECK(computes == 16);
}

TEST_CASE("memory sizes default to 64 KiB L1 and 512 KiB L2") {
    const Grid g = build_grid();
    CHECK(g.mem.l1_bytes == 65536);
    CHECK(g.mem.l2_bytes == 524288);
}

TEST_CASE("peak throughput: 256 GFLOP/s per core, 4 TFLOP/s aggregate") {
    const PeakFlops p = peak_flops(build_grid());
    CHECK(p.per_core == 2.0 * 128 * 1e9);
    CHECK(p.per_core == doctest::Approx(256e9));
    CHECK(p.aggregate == doctest::Approx(4.096e12));
}

TEST_CASE("A routes fan out along rows, B routes along columns") {
    const Grid g = build_grid();
    for (int i = 0; i < 4; ++i) {
        const CoreId mem{i, 1};
        std::set<std::pair<int, int>> a_dsts, b_dsts;
        for (const RouteEdge& e : g.routes) {
            if (e.src == mem && e.stream == StreamKind::a_tiles && core_kind(e.dst) == CoreKind::compute) {
                a_dsts.insert({e.dst.x, e.dst.y});
            }
            if (e.src == mem && e.stream == StreamKind::b_tiles && core_kind(e.dst) == CoreKind::compute) {
                b_dsts.insert({e.dst.x, e.dst.y});
            }
        }
        CHECK(a_dsts.size() == 4);
        CHECK(b_dsts.size() == 4);
        for (const auto& [x, y] : a_dsts) CHECK(y == i + 2);  // one hardware row
        for (const auto& [x, y] : b_dsts) CHECK(x == i);      // one hardware column
    }
}

TEST_CASE("every compute core is reached by exactly one A and one B fan-out") {
    const Grid g = build_grid();
    std::set<std::pair<int, int>> a_cover, b_cover;
    for (const RouteEdge& e : g.routes) {
        if (core_kind(e.dst) != CoreKind::compute) continue;
        if (e.stream == StreamKind::a_tiles) {
            CHECK(a_cover.insert({e.dst.x, e.dst.y}).second);
        } else if (e.stream == StreamKind::b_tiles) {
            CHECK(b_cover.insert({e.dst.x, e.dst.y}).second);
        }
    }
    CHECK(a_cover.size() == 16);
    CHECK(b_cover.size() == 16);
}

TEST_CASE("shim-memory links exist per column in both directions") {
    const Grid g = build_grid();
    for (int i = 0; i < 4; ++i) {
        bool a_in = false, b_in = false, c_out = false;
        for (const RouteEdge& e : g.routes) {
            if (e.src == CoreId{i, 0} && e.dst == CoreId{i, 1}) {
                if (e.stream == StreamKind::a_tiles) a_in = true;
                if (e.stream == StreamKind::b_tiles) b_in = true;
            }
            if (e.src == CoreId{i, 1} && e.dst == CoreId{i, 0} &&
                e.stream == StreamKind::c_tiles) {
                c_out = true;
            }
        }
        CHECK(a_in);
        CHECK(b_in);
        CHECK(c_out);
    }
}

TEST_CASE("dump is key/value plus core and route lines") {
    const Grid g = build_grid();
    const std::string text = dump_arch(g);
    CHECK(text.find("columns = 4") != std::string::npos);
    CHECK(text.find("compute_cores = 16") != std::string::npos);
    CHECK(text.find("core (0,0) shim") != std::string::npos);
    CHECK(text.find("core (3,5) compute") != std::string::npos);
    CHECK(text.find("route A") != std::string::npos);
}

TEST_CASE("non-default grids scale core counts") {
    const Grid g = build_grid(MemorySpec{}, ComputeSpec{}, 2, 3);
    CHECK(g.columns == 2);
    CHECK(g.compute_core_count() == 6);
    CHECK(g.core_count() == 2 * (2 + 3));
}

}

#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <numeric>
#include <vector>

#include "npusim/errors.hpp"
#include "npusim/layout.hpp"
#include "npusim/rng.hpp"

using namespace npusim;

namespace {

std::vector<std::uint8_t> u16_ramp(std::int64_t count) {
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(count) * 2);
    for (std::int64_t i = 0; i < count; ++i) {
        const std::uint16_t v = static_cast<std::uint16_t>(i);
        std::memcpy(buf.data() + i * 2, &v, 2);
    }
    return buf;
}

std::uint16_t u16_at(const std::vector<std::uint8_t>& buf, std::size_t elem) {
    std::uint16_t v;
    std::memcpy(&v, buf.data() + elem * 2, 2);
    return v;
}

std::vector<std::uint8_t> random_bytes(std::size_t count, Rng& rng) {
    std::vector<std::uint8_t> buf(count);
    for (auto& b : buf) b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    return buf;
}

} // namespace

TEST_SUITE("layout") {

TEST_CASE("gather indices follow the odometer, innermost fastest") {
    AccessPattern p;
    p.dims = {{2, 1}, {3, 2}};
    CHECK(pattern_gather_indices(p) == std::vector<std::int64_t>{0, 2, 4, 1, 3, 5});
    p.base_offset = 3;
    CHECK(pattern_gather_indices(p) == std::vector<std::int64_t>{3, 5, 7, 4, 6, 8});
}

TEST_CASE("tile pattern emits whole tiles in row-of-tiles order") {
    // 4x4 f32 matrix, 2x2 tiles: granule == element.
    const AccessPattern p = tile_pattern(4, 4, 2, 2, 4);
    CHECK(p.elem_bytes == 4);
    CHECK(p.positions() == 16);
    const std::vector<std::int64_t> want{0, 1, 4, 5,  2, 3, 6, 7,
                                         8, 9, 12, 13, 10, 11, 14, 15};
    CHECK(pattern_gather_indices(p) == want);
}

TEST_CASE("tile pattern rejects non-dividing tiles and sub-word pitches") {
    CHECK_THROWS_AS(tile_pattern(6, 4, 4, 2, 4), ShapeMismatch);
    CHECK_THROWS_AS(tile_pattern(4, 6, 2, 4, 4), ShapeMismatch);
    CHECK_THROWS_AS(tile_pattern(4, 3, 2, 3, 2), MisalignedGranule);   // 6-byte rows
    CHECK_THROWS_AS(tile_pattern(4, 4, 2, 1, 2), MisalignedGranule);   // 2-byte tile rows
}

TEST_CASE("operand patterns move 4-byte granules only") {
    const TileShape t;
    for (Operand op : {Operand::A, Operand::B, Operand::C}) {
        CHECK(micro_tile_pattern(t, op).elem_bytes == 4);
    }
    CHECK_THROWS_AS(micro_tile_pattern(TileShape{6, 8, 4}, Operand::A), MisalignedGranule);
    CHECK_THROWS_AS(micro_tile_pattern(TileShape{4, 12, 4}, Operand::A), MisalignedGranule);
    CHECK_THROWS_AS(micro_tile_pattern(TileShape{4, 8, 6}, Operand::B), MisalignedGranule);
    CHECK_THROWS_AS(micro_tile_pattern(TileShape{4, 8, 6}, Operand::C), MisalignedGranule);
}

TEST_CASE("A path: DMA pattern alone realizes the element permutation") {
    const TileShape t{8, 16, 4};
    auto buf = u16_ramp(t.m * t.k);
    buf = npusim::apply(micro_tile_pattern(t, Operand::A), buf);
    CHECK(micro_tile_fixup(Operand::A) == std::nullopt);
    const auto perm = element_permutation(t, Operand::A);
    for (std::size_t dst = 0; dst < perm.size(); ++dst) {
        CHECK(u16_at(buf, dst) == perm[dst]);
    }
}

TEST_CASE("B path: word-transposed DMA plus byte-pair fixup") {
    const TileShape t{4, 16, 8};
    auto buf = u16_ramp(t.k * t.n);  // column-major k x n source, value = flat index
    buf = npusim::apply(micro_tile_pattern(t, Operand::B), buf);
    const auto fixup = micro_tile_fixup(Operand::B);
    REQUIRE(fixup.has_value());
    CHECK(fixup->dst_of_src == std::array<int, 8>{0, 4, 1, 5, 2, 6, 3, 7});
    byte_pair_fixup(buf, *fixup);
    const auto perm = element_permutation(t, Operand::B);
    for (std::size_t dst = 0; dst < perm.size(); ++dst) {
        CHECK(u16_at(buf, dst) == perm[dst]);
    }
}

TEST_CASE("C path: f32 granules, no fixup") {
    const TileShape t{8, 8, 8};
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(t.m * t.n) * 4);
    for (std::int64_t i = 0; i < t.m * t.n; ++i) {
        const std::uint32_t v = static_cast<std::uint32_t>(i);
        std::memcpy(buf.data() + i * 4, &v, 4);
    }
    buf = npusim::apply(micro_tile_pattern(t, Operand::C), buf);
    CHECK(micro_tile_fixup(Operand::C) == std::nullopt);
    const auto perm = element_permutation(t, Operand::C);
    for (std::size_t dst = 0; dst < perm.size(); ++dst) {
        std::uint32_t v;
        std::memcpy(&v, buf.data() + dst * 4, 4);
        CHECK(v == static_cast<std::uint32_t>(perm[dst]));
    }
}

TEST_CASE("element permutations are bijections") {
    for (Operand op : {Operand::A, Operand::B, Operand::C}) {
        for (TileShape t : {TileShape{}, TileShape{16, 8, 4}, TileShape{4, 8, 12}}) {
            auto perm = element_permutation(t, op);
            std::sort(perm.begin(), perm.end());
            for (std::size_t i = 0; i < perm.size(); ++i) {
                REQUIRE(perm[i] == static_cast<std::int64_t>(i));
            }
        }
    }
}

TEST_CASE("fixup permutes 2-byte elements within each 16-byte window") {
    auto buf = u16_ramp(16);  // two windows
    byte_pair_fixup(buf, *micro_tile_fixup(Operand::B));
    const std::vector<std::uint16_t> want{0, 2, 4, 6, 1, 3, 5, 7,
                                          8, 10, 12, 14, 9, 11, 13, 15};
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(u16_at(buf, i) == want[i]);

    auto ragged = u16_ramp(9);
    CHECK_THROWS_AS(byte_pair_fixup(ragged, *micro_tile_fixup(Operand::B)), SizeMismatch);
}

TEST_CASE("inverse pattern restores the source bytes") {
    Rng rng(11);
    std::vector<AccessPattern> pats;
    const TileShape t;
    for (Operand op : {Operand::A, Operand::B, Operand::C}) pats.push_back(micro_tile_pattern(t, op));
    pats.push_back(tile_pattern(128, 64, 64, 32, 2));
    for (const AccessPattern& p : pats) {
        const auto src = random_bytes(static_cast<std::size_t>(p.total_bytes()), rng);
        const auto back = npusim::apply(invert(p), npusim::apply(p, src));
        CHECK(back == src);
        // Gather composition is the identity in both directions.
        const auto f = pattern_gather_indices(p);
        const auto g = pattern_gather_indices(invert(p));
        for (std::size_t o = 0; o < f.size(); ++o) {
            CHECK(g[static_cast<std::size_t>(f[o])] == static_cast<std::int64_t>(o));
        }
    }
}

TEST_CASE("non-permutation patterns refuse to invert") {
    AccessPattern broadcast;
    broadcast.dims = {{2, 0}, {4, 1}};
    CHECK_THROWS_AS(invert(broadcast), NotInvertible);

    AccessPattern offset = tile_pattern(4, 4, 2, 2, 4);
    offset.base_offset = 1;
    CHECK_THROWS_AS(invert(offset), NotInvertible);

    AccessPattern sparse;
    sparse.dims = {{2, 2}};
    CHECK_THROWS_AS(invert(sparse), NotInvertible);
}

TEST_CASE("apply validates the byte extent") {
    const AccessPattern p = tile_pattern(4, 4, 2, 2, 4);
    std::vector<std::uint8_t> wrong(60);
    CHECK_THROWS_AS(npusim::apply(p, wrong), SizeMismatch);

    AccessPattern escape;
    escape.dims = {{2, 5}};
    std::vector<std::uint8_t> src(8);
    CHECK_THROWS_AS(npusim::apply(escape, src), SizeMismatch);
}

TEST_CASE("chained blocks equal slice-then-apply") {
    const TileShape t{8, 16, 4};
    const AccessPattern p = micro_tile_pattern(t, Operand::A);
    const std::int64_t granules = p.positions();
    Rng rng(3);
    const auto two = random_bytes(static_cast<std::size_t>(p.total_bytes()) * 2, rng);
    const auto chained = apply_blocked(p, two, 2, granules);
    std::vector<std::uint8_t> first(two.begin(), two.begin() + p.total_bytes());
    std::vector<std::uint8_t> second(two.begin() + p.total_bytes(), two.end());
    const auto a = npusim::apply(p, first);
    const auto b = npusim::apply(p, second);
    CHECK(std::equal(a.begin(), a.end(), chained.begin()));
    CHECK(std::equal(b.begin(), b.end(), chained.begin() + a.size()));
}

TEST_CASE("permutation dump is one src -> dst line per element") {
    const auto perm = element_permutation(TileShape{4, 8, 4}, Operand::B);
    const std::string text = dump_permutation(perm);
    CHECK(text.rfind("0 -> 0\n1 -> 4\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : text) lines += c == '\n';
    CHECK(lines == perm.size());
}

}

#include "npusim/layout.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <sstream>

#include "npusim/errors.hpp"

namespace npusim {

AccessPattern tile_pattern(std::int64_t rows, std::int64_t cols,
                           std::int64_t tile_r, std::int64_t tile_c,
                           std::int64_t elem_bytes) {
    if (rows % tile_r != 0 || cols % tile_c != 0) {
        throw ShapeMismatch("tile dims must divide matrix dims");
    }
    if ((cols * elem_bytes) % 4 != 0 || (tile_c * elem_bytes) % 4 != 0) {
        throw MisalignedGranule("row and tile-row pitch must be 4-byte multiples");
    }
    const std::int64_t row_g = cols * elem_bytes / 4;        // granules per matrix row
    const std::int64_t tile_row_g = tile_c * elem_bytes / 4; // granules per tile row
    AccessPattern p;
    p.elem_bytes = 4;
    p.dims = {{rows / tile_r, tile_r * row_g},
              {cols / tile_c, tile_row_g},
              {tile_r, row_g},
              {tile_row_g, 1}};
    return p;
}

AccessPattern micro_tile_pattern(const TileShape& tile, Operand op) {
    AccessPattern p;
    p.elem_bytes = 4;
    switch (op) {
        case Operand::A: {
            // Source: row-major m x k bf16 tile; k/2 granules per row.
            if (tile.m % 4 != 0 || tile.k % 8 != 0) throw MisalignedGranule("A micro-tiling needs m % 4, k % 8");
            const std::int64_t kg = tile.k / 2;
            p.dims = {{tile.m / 4, 4 * kg}, {tile.k / 8, 4}, {4, kg}, {4, 1}};
            return p;
        }
        case Operand::B: {
            // Source: column-major k x n bf16 tile; k/2 granules per column.
            // Granules are gathered word-transposed per 8x4 micro-tile; the
            // 2-byte residue is micro_tile_fixup(B).
            if (tile.k % 8 != 0 || tile.n % 4 != 0) throw MisalignedGranule("B micro-tiling needs k % 8, n % 4");
            const std::int64_t colg = tile.k / 2;
            p.dims = {{tile.k / 8, 4}, {tile.n / 4, 4 * colg}, {4, 1}, {4, colg}};
            return p;
        }
        case Operand::C: {
            // Source: row-major m x n f32 tile; one element per granule.
            if (tile.m % 4 != 0 || tile.n % 4 != 0) throw MisalignedGranule("C micro-tiling needs m % 4, n % 4");
            p.dims = {{tile.m / 4, 4 * tile.n}, {tile.n / 4, 4}, {4, tile.n}, {4, 1}};
            return p;
        }
    }
    throw ShapeMismatch("unknown operand");
}

std::optional<FixupSpec> micro_tile_fixup(Operand op) {
    if (op != Operand::B) return std::nullopt;
    FixupSpec f;
    f.window_elems = 8;
    // Within each 16-byte window, source slot 2c+s holds element (row 2rp+s,
    // col c); the row-major micro-tile wants it at slot 4s+c.
    f.dst_of_src = {0, 4, 1, 5, 2, 6, 3, 7};
    return f;
}

void byte_pair_fixup(std::vector<std::uint8_t>& buffer, const FixupSpec& fixup) {
    if (fixup.is_identity()) return;
    const std::size_t window_bytes = static_cast<std::size_t>(fixup.window_elems) * 2;
    if (buffer.size() % window_bytes != 0) {
        throw SizeMismatch("buffer is not a whole number of fixup windows");
    }
    std::array<std::uint8_t, 16> tmp;
    for (std::size_t base = 0; base < buffer.size(); base += window_bytes) {
        std::memcpy(tmp.data(), buffer.data() + base, window_bytes);
        for (int s = 0; s < fixup.window_elems; ++s) {
            const int d = fixup.dst_of_src[static_cast<std::size_t>(s)];
            buffer[base + static_cast<std::size_t>(d) * 2] = tmp[static_cast<std::size_t>(s) * 2];
            buffer[base + static_cast<std::size_t>(d) * 2 + 1] = tmp[static_cast<std::size_t>(s) * 2 + 1];
        }
    }
}

std::vector<std::int64_t> pattern_gather_indices(const AccessPattern& p) {
    std::vector<std::int64_t> out(static_cast<std::size_t>(p.positions()));
    const std::size_t nd = p.dims.size();
    std::vector<std::int64_t> idx(nd, 0);
    std::int64_t src = p.base_offset;
    for (std::size_t o = 0; o < out.size(); ++o) {
        out[o] = src;
        for (std::size_t d = nd; d-- > 0;) {
            ++idx[d];
            src += p.dims[d].stride;
            if (idx[d] < p.dims[d].extent) break;
            src -= p.dims[d].stride * p.dims[d].extent;
            idx[d] = 0;
        }
    }
    return out;
}

std::vector<std::uint8_t> apply(const AccessPattern& p, const std::vector<std::uint8_t>& src) {
    if (static_cast<std::size_t>(p.total_bytes()) != src.size()) {
        throw SizeMismatch("pattern covers " + std::to_string(p.total_bytes()) +
                           " bytes, source has " + std::to_string(src.size()));
    }
    const std::vector<std::int64_t> gather = pattern_gather_indices(p);
    std::vector<std::uint8_t> out(src.size());
    const std::size_t eb = static_cast<std::size_t>(p.elem_bytes);
    for (std::size_t o = 0; o < gather.size(); ++o) {
        const std::int64_t g = gather[o];
        if (g < 0 || static_cast<std::size_t>(g + 1) * eb > src.size()) {
            throw SizeMismatch("pattern reads outside the source buffer");
        }
        std::memcpy(out.data() + o * eb, src.data() + static_cast<std::size_t>(g) * eb, eb);
    }
    return out;
}

Matrix apply(const AccessPattern& p, const Matrix& src) {
    Matrix dst = src;
    dst.data = apply(p, src.data);
    return dst;
}

std::vector<std::uint8_t> apply_blocked(const AccessPattern& p, const std::vector<std::uint8_t>& src,
                                        std::int64_t blocks, std::int64_t block_stride_granules) {
    const std::size_t eb = static_cast<std::size_t>(p.elem_bytes);
    const std::vector<std::int64_t> gather = pattern_gather_indices(p);
    std::vector<std::uint8_t> out(static_cast<std::size_t>(blocks) * gather.size() * eb);
    std::size_t o = 0;
    for (std::int64_t b = 0; b < blocks; ++b) {
        const std::int64_t base = b * block_stride_granules;
        for (const std::int64_t g : gather) {
            const std::int64_t s = base + g;
            if (s < 0 || static_cast<std::size_t>(s + 1) * eb > src.size()) {
                throw SizeMismatch("chained pattern reads outside the source buffer");
            }
            std::memcpy(out.data() + o * eb, src.data() + static_cast<std::size_t>(s) * eb, eb);
            ++o;
        }
    }
    return out;
}

AccessPattern invert(const AccessPattern& p) {
    if (p.base_offset != 0) throw NotInvertible("pattern with nonzero base offset");
    const std::size_t nd = p.dims.size();
    for (const PatternDim& d : p.dims) {
        if (d.stride == 0 && d.extent > 1) throw NotInvertible("repeat dimension (stride 0)");
        if (d.stride < 0) throw NotInvertible("negative stride");
    }
    // Lexicographic weights of each dim in the output index.
    std::vector<std::int64_t> weight(nd, 1);
    for (std::size_t d = nd; d-- > 1;) weight[d - 1] = weight[d] * p.dims[d].extent;
    // Sorted by source stride, the extents must tile the source index space
    // exactly (a compact mixed-radix decomposition), else not a permutation.
    std::vector<std::size_t> order(nd);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return p.dims[a].stride < p.dims[b].stride;
    });
    std::int64_t running = 1;
    for (const std::size_t d : order) {
        if (p.dims[d].extent == 1) continue;
        if (p.dims[d].stride != running) throw NotInvertible("pattern is not a compact permutation");
        running *= p.dims[d].extent;
    }
    AccessPattern inv;
    inv.elem_bytes = p.elem_bytes;
    inv.base_offset = 0;
    for (std::size_t i = order.size(); i-- > 0;) {
        const std::size_t d = order[i];
        inv.dims.push_back({p.dims[d].extent, weight[d]});
    }
    return inv;
}

std::vector<std::int64_t> element_permutation(const TileShape& tile, Operand op) {
    std::vector<std::int64_t> perm;
    switch (op) {
        case Operand::A: {
            perm.resize(static_cast<std::size_t>(tile.m * tile.k));
            std::size_t dst = 0;
            for (std::int64_t mr = 0; mr < tile.m / 4; ++mr)
                for (std::int64_t mc = 0; mc < tile.k / 8; ++mc)
                    for (std::int64_t r = 0; r < 4; ++r)
                        for (std::int64_t c = 0; c < 8; ++c)
                            perm[dst++] = (4 * mr + r) * tile.k + 8 * mc + c;
            return perm;
        }
        case Operand::B: {
            perm.resize(static_cast<std::size_t>(tile.k * tile.n));
            std::size_t dst = 0;
            for (std::int64_t l = 0; l < tile.k / 8; ++l)
                for (std::int64_t j = 0; j < tile.n / 4; ++j)
                    for (std::int64_t r = 0; r < 8; ++r)
                        for (std::int64_t c = 0; c < 4; ++c)
                            perm[dst++] = (4 * j + c) * tile.k + 8 * l + r;
            return perm;
        }
        case Operand::C: {
            perm.resize(static_cast<std::size_t>(tile.m * tile.n));
            std::size_t dst = 0;
            for (std::int64_t mr = 0; mr < tile.m / 4; ++mr)
                for (std::int64_t mc = 0; mc < tile.n / 4; ++mc)
                    for (std::int64_t r = 0; r < 4; ++r)
                        for (std::int64_t c = 0; c < 4; ++c)
                            perm[dst++] = (4 * mr + r) * tile.n + 4 * mc + c;
            return perm;
        }
    }
    throw ShapeMismatch("unknown operand");
}

std::string dump_permutation(const std::vector<std::int64_t>& dst_to_src) {
    std::vector<std::int64_t> src_to_dst(dst_to_src.size());
    for (std::size_t dst = 0; dst < dst_to_src.size(); ++dst) {
        src_to_dst[static_cast<std::size_t>(dst_to_src[dst])] = static_cast<std::int64_t>(dst);
    }
    std::ostringstream out;
    for (std::size_t src = 0; src < src_to_dst.size(); ++src) {
        out << src << " -> " << src_to_dst[src] << "\n";
    }
    return out.str();
}

} // namespace npusim

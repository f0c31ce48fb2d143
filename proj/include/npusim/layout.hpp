#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "npusim/matrix.hpp"
#include "npusim/plan.hpp"

namespace npusim {

// One DMA buffer-descriptor dimension: `extent` steps of `stride` granules.
struct PatternDim {
    std::int64_t extent;
    std::int64_t stride;
};

// Strided read descriptor. Output position o (lexicographic over dims,
// outermost first) reads the granule at base_offset + sum(idx_d * stride_d).
// elem_bytes is the granule size; DMA-level patterns use >= 4 bytes.
struct AccessPattern {
    std::int64_t elem_bytes = 4;
    std::vector<PatternDim> dims;  // at most 4; deeper nests are chained
    std::int64_t base_offset = 0;

    std::int64_t positions() const {
        std::int64_t p = 1;
        for (const PatternDim& d : dims) p *= d.extent;
        return p;
    }
    std::int64_t total_bytes() const { return positions() * elem_bytes; }
};

// Row-major (rows x cols) matrix -> contiguous (tile_r x tile_c) tiles in
// row-of-tiles order, 4-byte granules.
AccessPattern tile_pattern(std::int64_t rows, std::int64_t cols,
                           std::int64_t tile_r, std::int64_t tile_c,
                           std::int64_t elem_bytes);

// Within-tile rearrangement to the vector-kernel operand layouts, 4-byte
// granules, micro-tiles emitted contiguously in row-of-micro-tiles order.
//   A: row-major m x k bf16 tile -> 4x8 micro-tiles (row-major inside).
//   B: column-major k x n bf16 tile -> 8x4 micro-tiles; granules land
//      word-transposed, the remaining 2-byte swap is byte_pair_fixup.
//   C: row-major m x n f32 tile -> 4x4 micro-tiles.
AccessPattern micro_tile_pattern(const TileShape& tile, Operand op);

// In-core shuffle residue: a permutation of 2-byte elements within fixed
// windows. dst_of_src[i] is the destination slot of source element i.
struct FixupSpec {
    int window_elems = 8;
    std::array<int, 8> dst_of_src{0, 1, 2, 3, 4, 5, 6, 7};

    bool is_identity() const {
        for (int i = 0; i < window_elems; ++i) {
            if (dst_of_src[static_cast<std::size_t>(i)] != i) return false;
        }
        return true;
    }
};

// The fixup each operand path needs after its 4-byte DMA pattern. A and C
// need none; B needs the 2x4 word transpose within every 16-byte window.
std::optional<FixupSpec> micro_tile_fixup(Operand op);

// Apply the 2-byte-element window permutation in place.
void byte_pair_fixup(std::vector<std::uint8_t>& buffer, const FixupSpec& fixup);

// Expand a pattern: result[o] = source granule index read at output position o.
std::vector<std::int64_t> pattern_gather_indices(const AccessPattern& p);

// Read src through the pattern. Matrix overload keeps rows/cols/dtype.
std::vector<std::uint8_t> apply(const AccessPattern& p, const std::vector<std::uint8_t>& src);
Matrix apply(const AccessPattern& p, const Matrix& src);

// Apply the same pattern to `blocks` consecutive regions of src, advancing
// base_offset by block_stride_granules per region (DMA descriptor chaining).
std::vector<std::uint8_t> apply_blocked(const AccessPattern& p, const std::vector<std::uint8_t>& src,
                                        std::int64_t blocks, std::int64_t block_stride_granules);

// Closed-form inverse for compact permutation patterns.
AccessPattern invert(const AccessPattern& p);

// Element-level permutation of one full operand path (DMA pattern plus
// fixup): result[dst_element] = src_element. Sources are the declared tile
// layouts (A: row-major m x k; B: column-major k x n; C: row-major m x n).
std::vector<std::int64_t> element_permutation(const TileShape& tile, Operand op);

std::string dump_permutation(const std::vector<std::int64_t>& dst_to_src);

} // namespace npusim

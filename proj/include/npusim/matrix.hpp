#pragma once

#include <cassert>
#include <cstdint>
#include <string>
#include <vector>

#include "npusim/bfloat16.hpp"

namespace npusim {

class Rng;

enum class DType : std::uint32_t { f32 = 0, bf16 = 1 };
enum class Order { row_major, col_major };

// Dense 2-D buffer. `order` states how the logical (rows x cols) matrix is
// linearized in `data`; element type is f32 or bf16.
struct Matrix {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    DType dtype = DType::f32;
    Order order = Order::row_major;
    std::vector<std::uint8_t> data;

    static Matrix zeros(std::int64_t rows, std::int64_t cols,
                        DType dtype = DType::f32, Order order = Order::row_major);

    std::int64_t count() const { return rows * cols; }
    std::size_t elem_bytes() const { return dtype == DType::f32 ? 4 : 2; }
    std::size_t bytes() const { return static_cast<std::size_t>(count()) * elem_bytes(); }

    float* f32_data() { assert(dtype == DType::f32); return reinterpret_cast<float*>(data.data()); }
    const float* f32_data() const { assert(dtype == DType::f32); return reinterpret_cast<const float*>(data.data()); }
    bf16* bf16_data() { assert(dtype == DType::bf16); return reinterpret_cast<bf16*>(data.data()); }
    const bf16* bf16_data() const { assert(dtype == DType::bf16); return reinterpret_cast<const bf16*>(data.data()); }

    std::int64_t linear_index(std::int64_t r, std::int64_t c) const {
        return order == Order::row_major ? r * cols + c : c * rows + r;
    }

    float get(std::int64_t r, std::int64_t c) const {
        const std::int64_t i = linear_index(r, c);
        return dtype == DType::f32 ? f32_data()[i] : bf16_to_f32(bf16_data()[i]);
    }

    void set(std::int64_t r, std::int64_t c, float v) {
        const std::int64_t i = linear_index(r, c);
        if (dtype == DType::f32) f32_data()[i] = v;
        else bf16_data()[i] = bf16_round(v);
    }
};

// Fill with uniform values in [lo, hi), row-major traversal order regardless
// of storage order, so a given seed produces the same logical matrix.
void fill_uniform(Matrix& m, Rng& rng, double lo, double hi);

// Exact storage-order conversion; logical content unchanged.
Matrix to_order(const Matrix& src, Order target);

// Reinterpret the same bytes as the mathematical transpose (no copy):
// a row-major R x C buffer is exactly a col-major C x R buffer.
Matrix transposed_view(const Matrix& src);

// Round every element to bf16 (returns a bf16 matrix in the same order).
Matrix to_bf16(const Matrix& src);
Matrix to_f32(const Matrix& src);

// Zero-extend to (rows, cols) keeping storage order; slice back down.
Matrix pad_to(const Matrix& src, std::int64_t rows, std::int64_t cols);
Matrix slice_to(const Matrix& src, std::int64_t rows, std::int64_t cols);

// MAT0 container: 16-byte header (magic "MAT0", u32 dtype, u32 rows, u32 cols)
// followed by the little-endian row-major payload.
void save_matrix(const Matrix& m, const std::string& path);
Matrix load_matrix(const std::string& path);

} // namespace npusim

#include "npusim/matrix.hpp"

#include <cstring>
#include <fstream>

#include "npusim/errors.hpp"
#include "npusim/rng.hpp"

namespace npusim {

Matrix Matrix::zeros(std::int64_t rows, std::int64_t cols, DType dtype, Order order) {
    Matrix m;
    m.rows = rows;
    m.cols = cols;
    m.dtype = dtype;
    m.order = order;
    m.data.assign(static_cast<std::size_t>(rows) * cols * (dtype == DType::f32 ? 4 : 2), 0);
    return m;
}

void fill_uniform(Matrix& m, Rng& rng, double lo, double hi) {
    for (std::int64_t r = 0; r < m.rows; ++r) {
        for (std::int64_t c = 0; c < m.cols; ++c) {
            m.set(r, c, static_cast<float>(rng.uniform(lo, hi)));
        }
    }
}

Matrix to_order(const Matrix& src, Order target) {
    if (src.order == target) return src;
    Matrix dst = Matrix::zeros(src.rows, src.cols, src.dtype, target);
    const std::size_t eb = src.elem_bytes();
    for (std::int64_t r = 0; r < src.rows; ++r) {
        for (std::int64_t c = 0; c < src.cols; ++c) {
            std::memcpy(dst.data.data() + dst.linear_index(r, c) * eb,
                        src.data.data() + src.linear_index(r, c) * eb, eb);
        }
    }
    return dst;
}

Matrix transposed_view(const Matrix& src) {
    Matrix v = src;
    std::swap(v.rows, v.cols);
    v.order = src.order == Order::row_major ? Order::col_major : Order::row_major;
    return v;
}

Matrix to_bf16(const Matrix& src) {
    if (src.dtype == DType::bf16) return src;
    Matrix dst = Matrix::zeros(src.rows, src.cols, DType::bf16, src.order);
    const float* in = src.f32_data();
    bf16* out = dst.bf16_data();
    for (std::int64_t i = 0; i < src.count(); ++i) out[i] = bf16_round(in[i]);
    return dst;
}

Matrix to_f32(const Matrix& src) {
    if (src.dtype == DType::f32) return src;
    Matrix dst = Matrix::zeros(src.rows, src.cols, DType::f32, src.order);
    const bf16* in = src.bf16_data();
    float* out = dst.f32_data();
    for (std::int64_t i = 0; i < src.count(); ++i) out[i] = bf16_to_f32(in[i]);
    return dst;
}

Matrix pad_to(const Matrix& src, std::int64_t rows, std::int64_t cols) {
    if (rows == src.rows && cols == src.cols) return src;
    if (rows < src.rows || cols < src.cols) throw SizeMismatch("pad_to target smaller than source");
    Matrix dst = Matrix::zeros(rows, cols, src.dtype, src.order);
    const std::size_t eb = src.elem_bytes();
    if (src.order == Order::row_major) {
        for (std::int64_t r = 0; r < src.rows; ++r) {
            std::memcpy(dst.data.data() + static_cast<std::size_t>(r) * cols * eb,
                        src.data.data() + static_cast<std::size_t>(r) * src.cols * eb,
                        static_cast<std::size_t>(src.cols) * eb);
        }
    } else {
        for (std::int64_t c = 0; c < src.cols; ++c) {
            std::memcpy(dst.data.data() + static_cast<std::size_t>(c) * rows * eb,
                        src.data.data() + static_cast<std::size_t>(c) * src.rows * eb,
                        static_cast<std::size_t>(src.rows) * eb);
        }
    }
    return dst;
}

Matrix slice_to(const Matrix& src, std::int64_t rows, std::int64_t cols) {
    if (rows == src.rows && cols == src.cols) return src;
    if (rows > src.rows || cols > src.cols) throw SizeMismatch("slice_to target larger than source");
    Matrix dst = Matrix::zeros(rows, cols, src.dtype, src.order);
    const std::size_t eb = src.elem_bytes();
    if (src.order == Order::row_major) {
        for (std::int64_t r = 0; r < rows; ++r) {
            std::memcpy(dst.data.data() + static_cast<std::size_t>(r) * cols * eb,
                        src.data.data() + static_cast<std::size_t>(r) * src.cols * eb,
                        static_cast<std::size_t>(cols) * eb);
        }
    } else {
        for (std::int64_t c = 0; c < cols; ++c) {
            std::memcpy(dst.data.data() + static_cast<std::size_t>(c) * rows * eb,
                        src.data.data() + static_cast<std::size_t>(c) * src.rows * eb,
                        static_cast<std::size_t>(rows) * eb);
        }
    }
    return dst;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                         static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void save_matrix(const Matrix& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out.write("MAT0", 4);
    put_u32(out, static_cast<std::uint32_t>(m.dtype));
    put_u32(out, static_cast<std::uint32_t>(m.rows));
    put_u32(out, static_cast<std::uint32_t>(m.cols));
    const Matrix rm = to_order(m, Order::row_major);
    // Payload is little-endian; this writer assumes a little-endian host.
    out.write(reinterpret_cast<const char*>(rm.data.data()),
              static_cast<std::streamsize>(rm.data.size()));
    if (!out) throw ConfigError("short write: " + path);
}

Matrix load_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open matrix file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "MAT0", 4) != 0) {
        throw ConfigError("bad magic in matrix file: " + path);
    }
    const std::uint32_t dtype = get_u32(in);
    const std::uint32_t rows = get_u32(in);
    const std::uint32_t cols = get_u32(in);
    if (dtype > 1) throw ConfigError("unknown dtype code in matrix file: " + path);
    Matrix m = Matrix::zeros(rows, cols, static_cast<DType>(dtype), Order::row_major);
    in.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(m.data.size()));
    if (!in) throw ConfigError("truncated matrix file: " + path);
    return m;
}

} // namespace npusim

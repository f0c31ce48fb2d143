#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "npusim/arch.hpp"
#include "npusim/gpt2.hpp"
#include "npusim/offload.hpp"
#include "npusim/plan.hpp"
#include "npusim/report.hpp"
#include "npusim/rng.hpp"
#include "npusim/sim.hpp"

namespace py = pybind11;
using namespace npusim;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Matrix matrix_from_numpy(const FloatArray& arr) {
    if (arr.ndim() != 2) throw py::value_error("expected a 2-D float array");
    Matrix m = Matrix::zeros(arr.shape(0), arr.shape(1), DType::f32, Order::row_major);
    std::memcpy(m.data.data(), arr.data(), m.bytes());
    return m;
}

py::array_t<float> matrix_to_numpy(const Matrix& src) {
    const Matrix m = to_order(to_f32(src), Order::row_major);
    py::array_t<float> out({m.rows, m.cols});
    std::memcpy(out.mutable_data(), m.f32_data(), m.bytes());
    return out;
}

ModelConfig make_config(std::int64_t n_layers, std::int64_t d_model, std::int64_t n_heads,
                        std::int64_t vocab_size, std::int64_t seq_len, std::int64_t d_ff) {
    ModelConfig cfg;
    cfg.n_layers = n_layers;
    cfg.d_model = d_model;
    cfg.n_heads = n_heads;
    cfg.vocab_size = vocab_size;
    cfg.seq_len = seq_len;
    cfg.d_ff = d_ff > 0 ? d_ff : 4 * d_model;
    cfg.validate();
    return cfg;
}

} // namespace

PYBIND11_MODULE(_core, mod) {
    mod.doc() = "tiling compiler and array simulator core";

    mod.def("version", [] { return std::string(kToolVersion); });

    mod.def("peak_flops", [] {
        const PeakFlops p = peak_flops(build_grid());
        py::dict d;
        d["per_core"] = p.per_core;
        d["aggregate"] = p.aggregate;
        return d;
    });

    mod.def(
        "plan_info",
        [](std::int64_t M, std::int64_t K, std::int64_t N, std::int64_t m, std::int64_t k,
           std::int64_t n) {
            const TilingPlan p = plan(ProblemSize{M, K, N}, TileShape{m, k, n}, build_grid());
            py::dict d;
            d["padded"] = py::make_tuple(p.problem.M, p.problem.K, p.problem.N);
            d["padding"] = py::make_tuple(p.padding.pad_m, p.padding.pad_k, p.padding.pad_n);
            d["acc_depth"] = p.acc_depth;
            d["out_tiles"] = p.out_tiles;
            d["repeat_a"] = p.repeat_a;
            d["repeat_b"] = p.repeat_b;
            d["runtime_params"] = py::make_tuple(p.runtime_params[0], p.runtime_params[1]);
            d["summary"] = plan_summary(p);
            return d;
        },
        py::arg("M"), py::arg("K"), py::arg("N"), py::arg("m") = 64, py::arg("k") = 64,
        py::arg("n") = 32);

    mod.def(
        "gemm",
        [](const FloatArray& a, const FloatArray& b, const std::string& backend) {
            OffloadContext ctx(backend_from_name(backend), TileShape{}, build_grid(),
                               CostConfig{});
            GemmRequest req{matrix_from_numpy(a), matrix_from_numpy(b), false, false};
            return matrix_to_numpy(matmul(ctx, req).c);
        },
        py::arg("a"), py::arg("b"), py::arg("backend") = "emulated-npu");

    mod.def(
        "gemm_divergence",
        [](std::int64_t M, std::int64_t K, std::int64_t N, std::uint64_t seed) {
            OffloadContext ctx(Backend::emulated_npu, TileShape{}, build_grid(), CostConfig{});
            const auto stats = compare_oracle(ctx, {ProblemSize{M, K, N}}, seed);
            py::dict d;
            d["mean_rel"] = stats[0].mean_rel;
            d["max_rel"] = stats[0].max_rel;
            return d;
        },
        py::arg("M"), py::arg("K"), py::arg("N"), py::arg("seed") = 0);

    mod.def(
        "simulate",
        [](std::int64_t M, std::int64_t K, std::int64_t N, std::uint64_t seed) {
            const Grid grid = build_grid();
            const TilingPlan p = plan(ProblemSize{M, K, N}, TileShape{}, grid);
            Rng rng(seed);
            Matrix a = Matrix::zeros(M, K, DType::f32, Order::row_major);
            Matrix b = Matrix::zeros(K, N, DType::f32, Order::col_major);
            fill_uniform(a, rng, 0.0, 1.0);
            fill_uniform(b, rng, 0.0, 1.0);
            const SimReport r = run(p, grid, pad_to(to_bf16(a), p.problem.M, p.problem.K),
                                    pad_to(to_bf16(b), p.problem.K, p.problem.N), CostConfig{},
                                    RunOptions{});
            py::dict d;
            d["total_cycles"] = r.total_cycles;
            d["aggregate_utilization"] = r.aggregate_utilization;
            d["model_flops_per_second"] = r.model_flops_per_second;
            d["input_bytes_l3_to_l2"] = r.bytes.input_l3_to_l2();
            d["output_bytes_l2_to_l3"] = r.bytes.c_l2_to_l3;
            return d;
        },
        py::arg("M"), py::arg("K"), py::arg("N"), py::arg("seed") = 0);

    mod.def(
        "step_flops",
        [](std::int64_t n_layers, std::int64_t d_model, std::int64_t n_heads,
           std::int64_t vocab_size, std::int64_t seq_len, std::int64_t d_ff) {
            return count_flops(
                       make_config(n_layers, d_model, n_heads, vocab_size, seq_len, d_ff))
                .step_total();
        },
        py::arg("n_layers"), py::arg("d_model"), py::arg("n_heads"), py::arg("vocab_size"),
        py::arg("seq_len"), py::arg("d_ff") = 0);

    mod.def(
        "gemm_sizes",
        [](std::int64_t n_layers, std::int64_t d_model, std::int64_t n_heads,
           std::int64_t vocab_size, std::int64_t seq_len, std::int64_t d_ff) {
            std::vector<py::tuple> out;
            for (const ProblemSize& s : extract_gemm_sizes(
                     make_config(n_layers, d_model, n_heads, vocab_size, seq_len, d_ff))) {
                out.push_back(py::make_tuple(s.M, s.K, s.N));
            }
            return out;
        },
        py::arg("n_layers"), py::arg("d_model"), py::arg("n_heads"), py::arg("vocab_size"),
        py::arg("seq_len"), py::arg("d_ff") = 0);

    mod.def(
        "toy_train_losses",
        [](std::int64_t n_layers, std::int64_t d_model, std::int64_t n_heads,
           std::int64_t vocab_size, std::int64_t seq_len, std::int64_t steps,
           std::uint64_t seed, const std::string& backend, double lr) {
            const ModelConfig cfg =
                make_config(n_layers, d_model, n_heads, vocab_size, seq_len, 0);
            OffloadContext ctx = init(extract_gemm_sizes(cfg), TileShape{},
                                      backend_from_name(backend), build_grid(), CostConfig{});
            Gpt2 model(cfg, seed);
            const std::vector<int> corpus = synthetic_tokens(cfg, seed, cfg.seq_len + 1);
            const std::vector<int> tokens(corpus.begin(), corpus.end() - 1);
            const std::vector<int> targets(corpus.begin() + 1, corpus.end());
            std::vector<double> losses;
            for (std::int64_t s = 0; s < steps; ++s) {
                losses.push_back(
                    model.train_step(ctx, tokens, targets, static_cast<float>(lr)));
            }
            return losses;
        },
        py::arg("n_layers") = 2, py::arg("d_model") = 64, py::arg("n_heads") = 2,
        py::arg("vocab_size") = 256, py::arg("seq_len") = 32, py::arg("steps") = 10,
        py::arg("seed") = 1, py::arg("backend") = "reference-f32", py::arg("lr") = 1.0);

    mod.def("bf16_roundtrip", [](float x) { return bf16_to_f32(bf16_round(x)); });
}

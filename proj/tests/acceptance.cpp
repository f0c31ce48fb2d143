// Release gate. Runs ten end-to-end checks and prints one line per criterion:
//   criterion <n> PASS|FAIL <label>
// Exit status is 0 only when every criterion passes. Tolerances live in the
// constants below so the gate is self-describing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "npusim/arch.hpp"
#include "npusim/cost.hpp"
#include "npusim/gpt2.hpp"
#include "npusim/kernel.hpp"
#include "npusim/layout.hpp"
#include "npusim/matrix.hpp"
#include "npusim/offload.hpp"
#include "npusim/plan.hpp"
#include "npusim/rng.hpp"
#include "npusim/sim.hpp"

using namespace npusim;

namespace {

constexpr double kMeanRelDivergence = 6e-4;  // per-size emulated vs reference mean
constexpr double kMaxRelDivergence = 2e-3;   // per-size emulated vs reference max
constexpr double kStepFlopTarget = 197e9;
constexpr double kStepFlopSlack = 0.05;
constexpr int kOracleTrials = 100;
constexpr int kOracleMaxDim = 512;
constexpr double kOracleMeanRel = 1e-3;  // f32 pipeline vs f64 brute force
constexpr double kOracleMaxRel = 1e-2;
constexpr double kReconfigRatioFloor = 3.0;
constexpr int kOverfitSteps = 50;
constexpr float kOverfitLr = 0.1f;
constexpr double kOverfitRatio = 0.1;  // final loss under 10% of initial
constexpr int kGradSamples = 100;
constexpr double kGradRelTol = 1e-2;
constexpr double kGradStep = 5e-3;   // central difference half-step
constexpr double kGradFloor = 0.05;  // sample params whose gradient clears this

const char* kToyConfig =
    "n_layers = 2\nd_model = 64\nn_heads = 2\nd_ff = 256\n"
    "vocab_size = 256\nseq_len = 32\n";

ModelConfig gpt2_124m() {
    ModelConfig cfg;
    cfg.n_layers = 12;
    cfg.d_model = 768;
    cfg.n_heads = 12;
    cfg.d_ff = 3072;
    cfg.vocab_size = 50304;
    cfg.seq_len = 256;
    return cfg;
}

int g_failures = 0;

void criterion(int n, const char* label, const std::function<bool(std::string&)>& body) {
    std::string why;
    bool ok = false;
    try {
        ok = body(why);
    } catch (const std::exception& e) {
        ok = false;
        why = e.what();
    }
    std::printf("criterion %d %s %s\n", n, ok ? "PASS" : "FAIL", label);
    std::fflush(stdout);
    if (!ok) {
        ++g_failures;
        if (!why.empty()) std::fprintf(stderr, "criterion %d detail: %s\n", n, why.c_str());
    }
}

Matrix random_operand(std::int64_t rows, std::int64_t cols, Order order, Rng& rng,
                      double lo, double hi) {
    Matrix m = Matrix::zeros(rows, cols, DType::bf16, order);
    fill_uniform(m, rng, lo, hi);
    return m;
}

Matrix brute_force_f64(const Matrix& a, const Matrix& b) {
    Matrix c = Matrix::zeros(a.rows, b.cols, DType::f32, Order::row_major);
    for (std::int64_t i = 0; i < a.rows; ++i) {
        for (std::int64_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (std::int64_t kk = 0; kk < a.cols; ++kk) {
                acc += static_cast<double>(a.get(i, kk)) * static_cast<double>(b.get(kk, j));
            }
            c.set(i, j, static_cast<float>(acc));
        }
    }
    return c;
}

double mean_loss(Gpt2& model, OffloadContext& ctx, const std::vector<int>& tokens,
                 const std::vector<int>& targets) {
    model.forward(ctx, tokens, &targets);
    double sum = 0.0;
    for (float l : model.acts().losses) sum += static_cast<double>(l);
    return sum / static_cast<double>(model.acts().losses.size());
}

bool check_numeric_fidelity(std::string& why) {
    const Grid grid = build_grid();
    const CostConfig cost;
    const std::vector<ProblemSize> sizes = extract_gemm_sizes(gpt2_124m());
    OffloadContext ctx(Backend::emulated_npu, TileShape{}, grid, cost);
    const std::vector<DivergenceStats> stats = compare_oracle(ctx, sizes, 20260815);
    bool ok = stats.size() == sizes.size();
    for (const DivergenceStats& s : stats) {
        if (s.mean_rel >= kMeanRelDivergence || s.max_rel > kMaxRelDivergence) {
            ok = false;
            why += "size " + std::to_string(s.size.M) + "x" + std::to_string(s.size.K) + "x" +
                   std::to_string(s.size.N) + " mean_rel=" + std::to_string(s.mean_rel) +
                   " max_rel=" + std::to_string(s.max_rel) + "; ";
        }
    }
    return ok;
}

bool check_flop_ledger(std::string& why) {
    const ModelConfig cfg = gpt2_124m();
    const FlopLedger ledger = count_flops(cfg);
    const double step = ledger.step_total();
    bool ok = std::fabs(step - kStepFlopTarget) <= kStepFlopSlack * kStepFlopTarget;
    if (!ok) why += "step_total=" + std::to_string(step) + "; ";

    const std::vector<ProblemSize> sizes = extract_gemm_sizes(cfg);
    if (sizes.size() != 12) {
        ok = false;
        why += "distinct sizes=" + std::to_string(sizes.size()) + "; ";
    }
    const ProblemSize wanted[] = {{256, 768, 2304}, {256, 50304, 768}, {50304, 256, 768}};
    for (const ProblemSize& w : wanted) {
        const bool found = std::any_of(sizes.begin(), sizes.end(), [&](const ProblemSize& s) {
            return s.M == w.M && s.K == w.K && s.N == w.N;
        });
        if (!found) {
            ok = false;
            why += "missing " + std::to_string(w.M) + "x" + std::to_string(w.K) + "x" +
                   std::to_string(w.N) + "; ";
        }
    }
    return ok;
}

bool check_padding(std::string& why) {
    const Grid grid = build_grid();
    const TilingPlan p = plan(ProblemSize{50304, 256, 768}, TileShape{}, grid);
    const bool ok = p.problem.M == 50432 && p.problem.K == 256 && p.problem.N == 768 &&
                    p.padding.pad_m == 128 && p.padding.pad_k == 0 && p.padding.pad_n == 0;
    if (!ok) {
        why += "padded=" + std::to_string(p.problem.M) + "x" + std::to_string(p.problem.K) +
               "x" + std::to_string(p.problem.N) + " pads=" + std::to_string(p.padding.pad_m) +
               "/" + std::to_string(p.padding.pad_k) + "/" + std::to_string(p.padding.pad_n);
    }
    return ok;
}

bool check_kernel_schedule(std::string& why) {
    const Grid grid = build_grid();
    const KernelSchedule fast = schedule_kernel(TileShape{}, grid.compute, false);
    bool ok = fast.steady_nop_count() == 0 && fast.steady_cycles == 1024 &&
              fast.vmac_count() == 1024 &&
              hazard_free(fast, grid.compute.vmac_latency_cycles);
    if (!ok) {
        why += "rotating: nops=" + std::to_string(fast.steady_nop_count()) +
               " steady=" + std::to_string(fast.steady_cycles) +
               " vmacs=" + std::to_string(fast.vmac_count()) + "; ";
    }
    const KernelSchedule slow = schedule_kernel(TileShape{}, grid.compute, true);
    const std::int64_t per_pair = grid.compute.vmac_latency_cycles - 1;
    if (slow.steady_nop_count() < per_pair * (slow.vmac_count() - 1)) {
        ok = false;
        why += "single-accumulator nops=" + std::to_string(slow.steady_nop_count());
    }
    return ok;
}

bool check_oracle_equivalence(std::string& why) {
    const Grid grid = build_grid();
    const CostConfig cost;
    Rng rng(424242);

    std::vector<TileShape> tiles;
    for (std::int64_t m : {4, 8, 16, 32, 64}) {
        for (std::int64_t k : {8, 16, 32, 64}) {
            for (std::int64_t n : {4, 8, 16, 32, 64}) {
                const TileShape t{m, k, n};
                if (t.l1_footprint_bytes() <= grid.mem.l1_bytes) tiles.push_back(t);
            }
        }
    }

    bool ok = true;
    for (int trial = 0; trial < kOracleTrials && ok; ++trial) {
        const ProblemSize prob{rng.uniform_int(1, kOracleMaxDim),
                               rng.uniform_int(1, kOracleMaxDim),
                               rng.uniform_int(1, kOracleMaxDim)};
        const TileShape tile = tiles[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(tiles.size()) - 1))];
        const TilingPlan p = plan(prob, tile, grid);
        const Matrix a = pad_to(random_operand(prob.M, prob.K, Order::row_major, rng, -1.0, 1.0),
                                p.problem.M, p.problem.K);
        const Matrix b = pad_to(random_operand(prob.K, prob.N, Order::col_major, rng, -1.0, 1.0),
                                p.problem.K, p.problem.N);
        const SimReport rep = run(p, grid, a, b, cost, RunOptions{});
        const Matrix f = functional_gemm(p, a, b);
        if (rep.output.data != f.data) {
            ok = false;
            why += "trial " + std::to_string(trial) + " simulated output != functional; ";
            break;
        }
        const DivergenceStats d = divergence(rep.output, brute_force_f64(a, b));
        if (d.mean_rel > kOracleMeanRel || d.max_rel > kOracleMaxRel) {
            ok = false;
            why += "trial " + std::to_string(trial) + " (" + std::to_string(prob.M) + "x" +
                   std::to_string(prob.K) + "x" + std::to_string(prob.N) +
                   ") mean_rel=" + std::to_string(d.mean_rel) +
                   " max_rel=" + std::to_string(d.max_rel) + "; ";
        }
    }
    return ok;
}

bool check_byte_conservation(std::string& why) {
    const Grid grid = build_grid();
    const CostConfig cost;
    Rng rng(7);
    const struct {
        ProblemSize prob;
        TileShape tile;
    } cases[] = {
        {{512, 128, 256}, TileShape{}},
        {{256, 64, 128}, TileShape{}},
        {{100, 50, 60}, TileShape{16, 16, 16}},
        {{300, 100, 500}, TileShape{}},
    };
    bool ok = true;
    for (const auto& c : cases) {
        const TilingPlan p = plan(c.prob, c.tile, grid);
        const Matrix a =
            pad_to(random_operand(c.prob.M, c.prob.K, Order::row_major, rng, 0.0, 1.0),
                   p.problem.M, p.problem.K);
        const Matrix b =
            pad_to(random_operand(c.prob.K, c.prob.N, Order::col_major, rng, 0.0, 1.0),
                   p.problem.K, p.problem.N);
        const SimReport rep = run(p, grid, a, b, cost, RunOptions{});
        const std::int64_t Mp = p.problem.M, Kp = p.problem.K, Np = p.problem.N;
        const std::int64_t want_a = Mp * Kp * 2 * (Np / (4 * p.tile.n));
        const std::int64_t want_b = Kp * Np * 2 * (Mp / (4 * p.tile.m));
        const std::int64_t want_c = Mp * Np * 4;
        if (rep.bytes.a_l3_to_l2 != want_a || rep.bytes.b_l3_to_l2 != want_b ||
            rep.bytes.c_l2_to_l3 != want_c) {
            ok = false;
            why += std::to_string(c.prob.M) + "x" + std::to_string(c.prob.K) + "x" +
                   std::to_string(c.prob.N) + " got a=" + std::to_string(rep.bytes.a_l3_to_l2) +
                   " b=" + std::to_string(rep.bytes.b_l3_to_l2) +
                   " c=" + std::to_string(rep.bytes.c_l2_to_l3) +
                   " want a=" + std::to_string(want_a) + " b=" + std::to_string(want_b) +
                   " c=" + std::to_string(want_c) + "; ";
        }
    }
    return ok;
}

bool check_reconfiguration(std::string& why) {
    const Grid grid = build_grid();
    const CostConfig cost;
    const TilingPlan from = plan(ProblemSize{512, 128, 256}, TileShape{}, grid);
    const TilingPlan to = plan(ProblemSize{256, 256, 512}, TileShape{}, grid);
    const std::int64_t minimal = reconfigure(from, to, ReconfigMode::minimal, cost);
    const std::int64_t full = reconfigure(from, to, ReconfigMode::full, cost);
    const double ratio = static_cast<double>(full) / static_cast<double>(minimal);
    bool ok = minimal > 0 && ratio >= kReconfigRatioFloor;
    if (!ok) why += "full/minimal=" + std::to_string(ratio) + "; ";

    OffloadContext ctx(Backend::emulated_npu, TileShape{}, grid, cost);
    const ProblemSize size{512, 128, 256};
    const std::int64_t first = ctx.account_reconfig(size);
    const std::int64_t repeat = ctx.account_reconfig(size);
    if (first <= 0 || repeat != 0) {
        ok = false;
        why += "first=" + std::to_string(first) + " repeat=" + std::to_string(repeat);
    }
    return ok;
}

bool check_layout_permutations(std::string& why) {
    const struct {
        Operand op;
        TileShape tile;
        const char* name;
    } cases[] = {
        {Operand::A, TileShape{64, 64, 32}, "A 64x64"},
        {Operand::B, TileShape{64, 64, 32}, "B 64x32"},
        {Operand::C, TileShape{64, 64, 32}, "C 64x32"},
    };
    bool ok = true;
    for (const auto& c : cases) {
        const std::vector<std::int64_t> perm = element_permutation(c.tile, c.op);
        std::vector<std::int64_t> sorted = perm;
        std::sort(sorted.begin(), sorted.end());
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(sorted.size()); ++i) {
            if (sorted[static_cast<std::size_t>(i)] != i) {
                ok = false;
                why += std::string(c.name) + " not a permutation; ";
                break;
            }
        }
        std::vector<std::int64_t> inverse(perm.size(), -1);
        for (std::int64_t dst = 0; dst < static_cast<std::int64_t>(perm.size()); ++dst) {
            inverse[static_cast<std::size_t>(perm[static_cast<std::size_t>(dst)])] = dst;
        }
        for (std::int64_t pos = 0; pos < static_cast<std::int64_t>(perm.size()); ++pos) {
            const std::int64_t there = inverse[static_cast<std::size_t>(pos)];
            if (perm[static_cast<std::size_t>(there)] != pos) {
                ok = false;
                why += std::string(c.name) + " inverse broken at " + std::to_string(pos) + "; ";
                break;
            }
        }
        if (micro_tile_pattern(c.tile, c.op).elem_bytes < 4) {
            ok = false;
            why += std::string(c.name) + " sub-word granule; ";
        }
    }
    if (tile_pattern(256, 128, 64, 32, 2).elem_bytes < 4) {
        ok = false;
        why += "tile pattern sub-word granule; ";
    }
    return ok;
}

bool check_training(std::string& why) {
    const ModelConfig cfg = ModelConfig::from_text(kToyConfig);
    const Grid grid = build_grid();
    const CostConfig cost;
    const std::vector<int> corpus = synthetic_tokens(cfg, 5, cfg.seq_len + 1);
    const std::vector<int> tokens(corpus.begin(), corpus.end() - 1);
    const std::vector<int> targets(corpus.begin() + 1, corpus.end());

    bool ok = true;
    for (const Backend backend : {Backend::reference_f32, Backend::emulated_npu}) {
        OffloadContext ctx = init(extract_gemm_sizes(cfg), TileShape{}, backend, grid, cost);
        Gpt2 model(cfg, 7);
        double first = 0.0, last = 0.0;
        for (int s = 0; s < kOverfitSteps; ++s) {
            last = model.train_step(ctx, tokens, targets, kOverfitLr);
            if (s == 0) first = last;
        }
        if (!(last < kOverfitRatio * first)) {
            ok = false;
            why += std::string(backend == Backend::reference_f32 ? "reference" : "emulated") +
                   " overfit first=" + std::to_string(first) + " last=" + std::to_string(last) +
                   "; ";
        }
    }

    OffloadContext ref = init(extract_gemm_sizes(cfg), TileShape{}, Backend::reference_f32,
                              grid, cost);
    Gpt2 model(cfg, 11);
    model.forward(ref, tokens, &targets);
    model.backward(ref, tokens, targets);

    struct Pick {
        std::vector<float>* tensor;
        std::size_t index;
        double analytic;
    };
    std::vector<Pick> picks;
    {
        auto pentries = model.params().entries();
        auto gentries = model.grads().entries();
        for (std::size_t t = 0; t < gentries.size(); ++t) {
            const std::vector<float>& g = *gentries[t].second;
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (std::fabs(static_cast<double>(g[i])) >= kGradFloor) {
                    picks.push_back(Pick{pentries[t].second, i, static_cast<double>(g[i])});
                }
            }
        }
    }
    std::sort(picks.begin(), picks.end(), [](const Pick& a, const Pick& b) {
        return std::fabs(a.analytic) > std::fabs(b.analytic);
    });
    if (picks.size() > static_cast<std::size_t>(kGradSamples)) {
        picks.resize(static_cast<std::size_t>(kGradSamples));
    }
    if (picks.size() < static_cast<std::size_t>(kGradSamples)) {
        ok = false;
        why += "only " + std::to_string(picks.size()) + " params clear the gradient floor; ";
    }
    for (const Pick& p : picks) {
        float& slot = (*p.tensor)[p.index];
        const float saved = slot;
        slot = static_cast<float>(saved + kGradStep);
        const double up = mean_loss(model, ref, tokens, targets);
        slot = static_cast<float>(saved - kGradStep);
        const double down = mean_loss(model, ref, tokens, targets);
        slot = saved;
        const double numeric = (up - down) / (2.0 * kGradStep);
        const double denom =
            std::max({std::fabs(numeric), std::fabs(p.analytic), kGradFloor});
        const double rel = std::fabs(numeric - p.analytic) / denom;
        if (rel >= kGradRelTol) {
            ok = false;
            why += "gradient rel=" + std::to_string(rel) +
                   " analytic=" + std::to_string(p.analytic) +
                   " numeric=" + std::to_string(numeric) + "; ";
            break;
        }
    }

    model.forward(ref, tokens, &targets);
    const Activations& acts = model.acts();
    const std::int64_t T = cfg.seq_len, V = cfg.vocab_size, H = cfg.n_heads;
    for (std::int64_t t = 0; t < T; ++t) {
        double row = 0.0;
        for (std::int64_t v = 0; v < V; ++v) {
            row += static_cast<double>(acts.probs[static_cast<std::size_t>(t * V + v)]);
        }
        if (std::fabs(row - 1.0) > 1e-4) {
            ok = false;
            why += "probs row " + std::to_string(t) + " sums to " + std::to_string(row) + "; ";
            break;
        }
    }
    for (std::size_t l = 0; l < acts.layers.size() && ok; ++l) {
        const std::vector<float>& att = acts.layers[l].att;
        for (std::int64_t h = 0; h < H && ok; ++h) {
            for (std::int64_t t = 0; t < T && ok; ++t) {
                double row = 0.0;
                for (std::int64_t t2 = 0; t2 < T; ++t2) {
                    const float v = att[static_cast<std::size_t>((h * T + t) * T + t2)];
                    if (t2 > t && v != 0.0f) {
                        ok = false;
                        why += "causal mask leak at layer " + std::to_string(l) + "; ";
                        break;
                    }
                    row += static_cast<double>(v);
                }
                if (ok && std::fabs(row - 1.0) > 1e-4) {
                    ok = false;
                    why += "attention row sums to " + std::to_string(row) + "; ";
                }
            }
        }
    }
    return ok;
}

bool check_peak_model(std::string& why) {
    const Grid grid = build_grid();
    const CostConfig cost;
    const PeakFlops pk = peak_flops(grid);
    bool ok = std::fabs(pk.per_core - 256e9) < 1.0 && std::fabs(pk.aggregate - 4.096e12) < 1.0;
    if (!ok) {
        why += "per_core=" + std::to_string(pk.per_core) +
               " aggregate=" + std::to_string(pk.aggregate) + "; ";
    }
    Rng rng(13);
    for (const ProblemSize& prob : {ProblemSize{512, 128, 256}, ProblemSize{256, 256, 512}}) {
        const TilingPlan p = plan(prob, TileShape{}, grid);
        const Matrix a = pad_to(random_operand(prob.M, prob.K, Order::row_major, rng, 0.0, 1.0),
                                p.problem.M, p.problem.K);
        const Matrix b = pad_to(random_operand(prob.K, prob.N, Order::col_major, rng, 0.0, 1.0),
                                p.problem.K, p.problem.N);
        const SimReport rep = run(p, grid, a, b, cost, RunOptions{});
        if (rep.model_flops_per_second > pk.aggregate) {
            ok = false;
            why += "effective " + std::to_string(rep.model_flops_per_second) +
                   " exceeds peak; ";
        }
    }
    return ok;
}

}  // namespace

int main() {
    criterion(1, "emulated backend matches f32 reference on model gemm sizes",
              check_numeric_fidelity);
    criterion(2, "per-step flop ledger and distinct gemm size extraction", check_flop_ledger);
    criterion(3, "padding touches only the undersized dimension", check_padding);
    criterion(4, "steady-state kernel schedule is hazard free without nops",
              check_kernel_schedule);
    criterion(5, "cycle simulator agrees with functional and f64 oracles",
              check_oracle_equivalence);
    criterion(6, "link byte counters match closed-form transfer totals",
              check_byte_conservation);
    criterion(7, "minimal reconfiguration beats full rewrite threefold", check_reconfiguration);
    criterion(8, "layout transform chains are invertible permutations",
              check_layout_permutations);
    criterion(9, "toy model overfits and analytic gradients verify", check_training);
    criterion(10, "peak throughput model and effective rate envelope", check_peak_model);
    return g_failures == 0 ? 0 : 1;
}

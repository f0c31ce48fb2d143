#include "npusim/cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "npusim/arch.hpp"
#include "npusim/errors.hpp"
#include "npusim/gpt2.hpp"
#include "npusim/kernel.hpp"
#include "npusim/layout.hpp"
#include "npusim/offload.hpp"
#include "npusim/plan.hpp"
#include "npusim/report.hpp"
#include "npusim/rng.hpp"
#include "npusim/sim.hpp"

namespace npusim {

namespace {

bool parse_dims(const std::string& text, std::vector<std::int64_t>& dims, std::size_t want) {
    dims.clear();
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, 'x')) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(part, &used);
            if (used != part.size() || v <= 0) return false;
            dims.push_back(v);
        } catch (...) {
            return false;
        }
    }
    return dims.size() == want;
}

ProblemSize parse_size(const std::string& text) {
    std::vector<std::int64_t> d;
    if (!parse_dims(text, d, 3)) {
        throw CLI::ValidationError("--size", "expected MxKxN, got '" + text + "'");
    }
    return ProblemSize{d[0], d[1], d[2]};
}

TileShape parse_tile(const std::string& text) {
    std::vector<std::int64_t> d;
    if (!parse_dims(text, d, 3)) {
        throw CLI::ValidationError("--tile", "expected mxkxn, got '" + text + "'");
    }
    return TileShape{d[0], d[1], d[2]};
}

void deliver(const nlohmann::json& body, const std::string& path, std::ostream& out) {
    const std::string text = render_report(body);
    if (path.empty()) {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write report file: " + path);
    f << text;
}

CostConfig load_cost(const std::string& path, RunManifest& manifest) {
    if (path.empty()) return CostConfig{};
    manifest.add_input(path);
    return CostConfig::load(path);
}

Matrix random_bf16_operand(std::int64_t rows, std::int64_t cols, Order order, Rng& rng) {
    Matrix m = Matrix::zeros(rows, cols, DType::f32, order);
    fill_uniform(m, rng, 0.0, 1.0);
    return to_bf16(m);
}

std::uint64_t matrix_digest(const Matrix& m) {
    const Matrix f = to_order(to_f32(m), Order::row_major);
    return fnv1a_digest(f.f32_data(), static_cast<std::size_t>(f.count()));
}

int cmd_plan(const ProblemSize& size, const TileShape& tile, bool emit, bool dump_arch_flag,
             const std::string& report_path, RunManifest manifest, std::ostream& out) {
    const Grid grid = build_grid();
    const TilingPlan p = plan(size, tile, grid);
    out << plan_summary(p);
    if (emit) out << emit_schedule(p);
    if (dump_arch_flag) out << dump_arch(grid);
    if (!report_path.empty()) {
        nlohmann::json j;
        j["manifest"] = to_json(manifest);
        j["summary"] = plan_summary(p);
        j["padded"] = {{"M", p.problem.M}, {"K", p.problem.K}, {"N", p.problem.N}};
        j["padding"] = {{"pad_m", p.padding.pad_m},
                        {"pad_k", p.padding.pad_k},
                        {"pad_n", p.padding.pad_n}};
        j["repeat_a"] = p.repeat_a;
        j["repeat_b"] = p.repeat_b;
        j["runtime_params"] = {p.runtime_params[0], p.runtime_params[1]};
        if (emit) j["schedule"] = emit_schedule(p);
        deliver(j, report_path, out);
    }
    return 0;
}

int cmd_layout(const std::string& op_name, const std::string& tile_text,
               const std::string& report_path, RunManifest manifest, std::ostream& out) {
    std::vector<std::int64_t> d;
    if (!parse_dims(tile_text, d, 2)) {
        throw CLI::ValidationError("--tile", "expected ROWSxCOLS, got '" + tile_text + "'");
    }
    Operand op;
    TileShape tile;
    if (op_name == "A") {
        op = Operand::A;
        tile.m = d[0];
        tile.k = d[1];
    } else if (op_name == "B") {
        op = Operand::B;
        tile.k = d[0];
        tile.n = d[1];
    } else {
        op = Operand::C;
        tile.m = d[0];
        tile.n = d[1];
    }
    const std::vector<std::int64_t> perm = element_permutation(tile, op);
    const std::string text = dump_permutation(perm);
    out << text;
    if (!report_path.empty()) {
        nlohmann::json j;
        j["manifest"] = to_json(manifest);
        j["op"] = op_name;
        j["positions"] = static_cast<std::int64_t>(perm.size());
        j["permutation"] = text;
        deliver(j, report_path, out);
    }
    return 0;
}

int cmd_kernel(const TileShape& tile, bool single_acc, const std::string& report_path,
               RunManifest manifest, std::ostream& out) {
    const Grid grid = build_grid();
    const KernelSchedule s = schedule_kernel(tile, grid.compute, single_acc);
    out << "tile = " << tile.m << "x" << tile.k << "x" << tile.n << "\n";
    out << "preamble_cycles = " << s.preamble_cycles << "\n";
    out << "steady_cycles = " << s.steady_cycles << "\n";
    out << "postamble_cycles = " << s.postamble_cycles << "\n";
    out << "total_cycles = " << s.total_cycles() << "\n";
    out << "vmac_count = " << s.vmac_count() << "\n";
    out << "steady_nop_count = " << s.steady_nop_count() << "\n";
    out << "utilization = " << s.utilization() << "\n";
    if (!report_path.empty()) {
        nlohmann::json j;
        j["manifest"] = to_json(manifest);
        j["preamble_cycles"] = s.preamble_cycles;
        j["steady_cycles"] = s.steady_cycles;
        j["postamble_cycles"] = s.postamble_cycles;
        j["total_cycles"] = s.total_cycles();
        j["vmac_count"] = s.vmac_count();
        j["steady_nop_count"] = s.steady_nop_count();
        j["utilization"] = s.utilization();
        deliver(j, report_path, out);
    }
    return 0;
}

int cmd_simulate(const ProblemSize& size, const TileShape& tile, std::uint64_t seed,
                 const std::string& cost_path, const std::string& trace_path,
                 const std::string& report_path, RunManifest manifest, std::ostream& out) {
    const Grid grid = build_grid();
    const CostConfig cost = load_cost(cost_path, manifest);
    const TilingPlan p = plan(size, tile, grid);
    Rng rng(seed);
    const Matrix a = pad_to(random_bf16_operand(size.M, size.K, Order::row_major, rng),
                            p.problem.M, p.problem.K);
    const Matrix b = pad_to(random_bf16_operand(size.K, size.N, Order::col_major, rng),
                            p.problem.K, p.problem.N);
    RunOptions opt;
    opt.trace = !trace_path.empty();
    const SimReport report = run(p, grid, a, b, cost, opt);
    if (!trace_path.empty()) {
        std::ofstream f(trace_path, std::ios::binary);
        if (!f) throw ConfigError("cannot write trace file: " + trace_path);
        f << format_trace(trace(report));
    }
    nlohmann::json j = to_json(report);
    j["manifest"] = to_json(manifest);
    j["output_digest"] = digest_hex(fnv1a_digest(
        report.output.f32_data(), static_cast<std::size_t>(report.output.count())));
    deliver(j, report_path, out);
    return 0;
}

int cmd_gemm(const std::string& size_text, const std::string& backend_name_text,
             std::uint64_t seed, const std::string& a_path, const std::string& b_path,
             const std::string& out_path, bool wallclock, const std::string& report_path,
             RunManifest manifest, std::ostream& out) {
    const Grid grid = build_grid();
    const CostConfig cost;
    const Backend backend = backend_from_name(backend_name_text);
    OffloadContext ctx(backend, TileShape{}, grid, cost);

    Matrix a, b;
    if (!a_path.empty() || !b_path.empty()) {
        if (a_path.empty() || b_path.empty()) {
            throw ConfigError("--a and --b must be given together");
        }
        manifest.add_input(a_path);
        manifest.add_input(b_path);
        a = load_matrix(a_path);
        b = to_order(load_matrix(b_path), Order::col_major);
    } else {
        if (size_text.empty()) throw ConfigError("either --size or --a/--b is required");
        const ProblemSize size = parse_size(size_text);
        Rng rng(seed);
        a = Matrix::zeros(size.M, size.K, DType::f32, Order::row_major);
        b = Matrix::zeros(size.K, size.N, DType::f32, Order::col_major);
        fill_uniform(a, rng, 0.0, 1.0);
        fill_uniform(b, rng, 0.0, 1.0);
    }

    GemmRequest req{a, b, false, false};
    const auto t0 = std::chrono::steady_clock::now();
    const GemmResult res = matmul(ctx, req);
    const auto t1 = std::chrono::steady_clock::now();

    if (!out_path.empty()) save_matrix(res.c, out_path);

    nlohmann::json j;
    j["manifest"] = to_json(manifest);
    j["backend"] = backend_name(backend);
    j["size"] = {{"M", a.rows}, {"K", a.cols}, {"N", b.cols}};
    j["breakdown"] = to_json(res.breakdown);
    j["reconfig_cycles"] = res.reconfig_cycles;
    j["cache_hit"] = res.cache_hit;
    j["report"] = to_json(res.report);
    j["output_digest"] = digest_hex(matrix_digest(res.c));
    if (wallclock) {
        j["wallclock_ms"] =
            std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(t1 - t0)
                .count();
    }
    deliver(j, report_path, out);
    return 0;
}

int cmd_train_toy(const std::string& config_path, const std::string& backend_name_text,
                  std::int64_t steps, std::uint64_t seed, double lr, double clip,
                  const std::string& metrics_path, RunManifest manifest, std::ostream& out) {
    manifest.add_input(config_path);
    const ModelConfig cfg = ModelConfig::load(config_path);
    const Grid grid = build_grid();
    const CostConfig cost;
    OffloadContext ctx = init(extract_gemm_sizes(cfg), TileShape{},
                              backend_from_name(backend_name_text), grid, cost);
    Gpt2 model(cfg, seed);
    const std::vector<int> corpus = synthetic_tokens(cfg, seed, cfg.seq_len + 1);
    const std::vector<int> tokens(corpus.begin(), corpus.end() - 1);
    const std::vector<int> targets(corpus.begin() + 1, corpus.end());

    std::vector<double> losses;
    for (std::int64_t s = 0; s < steps; ++s) {
        const float loss = model.train_step(ctx, tokens, targets, static_cast<float>(lr),
                                            static_cast<float>(clip));
        losses.push_back(loss);
        if (!metrics_path.empty()) out << "step=" << s << " loss=" << loss << "\n";
    }

    nlohmann::json j;
    j["manifest"] = to_json(manifest);
    j["backend"] = backend_name_text;
    j["steps"] = steps;
    j["lr"] = lr;
    j["clip"] = clip;
    j["param_count"] = model.params().param_count();
    j["losses"] = losses;
    j["initial_loss"] = losses.empty() ? 0.0 : losses.front();
    j["final_loss"] = losses.empty() ? 0.0 : losses.back();
    j["loss_ratio"] = losses.empty() || losses.front() == 0.0
                          ? 0.0
                          : losses.back() / losses.front();
    j["logits_digest"] =
        digest_hex(fnv1a_digest(model.acts().logits.data(), model.acts().logits.size()));
    deliver(j, metrics_path, out);
    return 0;
}

int cmd_flops(const std::string& config_path, const std::string& report_path,
              RunManifest manifest, std::ostream& out) {
    manifest.add_input(config_path);
    const ModelConfig cfg = ModelConfig::load(config_path);
    const FlopLedger ledger = count_flops(cfg);
    out << ledger.to_text();
    const std::vector<ProblemSize> sizes = extract_gemm_sizes(cfg);
    out << "distinct_gemm_sizes = " << sizes.size() << "\n";
    if (!report_path.empty()) {
        nlohmann::json j;
        j["manifest"] = to_json(manifest);
        j["ledger"] = to_json(ledger);
        nlohmann::json sj = nlohmann::json::array();
        for (const ProblemSize& s : sizes) sj.push_back({{"M", s.M}, {"K", s.K}, {"N", s.N}});
        j["gemm_sizes"] = sj;
        deliver(j, report_path, out);
    }
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"tiling compiler, array simulator, and training workbench for a 4x4 NPU"};
    app.require_subcommand(1);

    std::string size_text, tile_text = "64x64x32", report_path, cost_path, trace_path;
    std::string op_name = "A", tile2_text = "64x64";
    std::string backend_text = "emulated-npu", config_path, metrics_path;
    std::string a_path, b_path, out_path;
    std::uint64_t seed = 0;
    std::int64_t steps = 50;
    double lr = 1.0, clip = 1.0;
    bool emit_sched = false, dump_arch_flag = false, single_acc = false, wallclock = false;

    CLI::App* plan_cmd = app.add_subcommand("plan", "tile and map one GEMM onto the array");
    plan_cmd->add_option("--size", size_text, "problem size MxKxN")->required();
    plan_cmd->add_option("--tile", tile_text, "tile shape mxkxn");
    plan_cmd->add_flag("--emit-schedule", emit_sched, "dump per-shim transfer sequences");
    plan_cmd->add_flag("--dump-arch", dump_arch_flag, "dump the grid description");
    plan_cmd->add_option("--report", report_path, "write a JSON report here");

    CLI::App* layout_cmd = app.add_subcommand("layout", "print a tile layout permutation");
    layout_cmd->add_option("--op", op_name, "operand A|B|C")
        ->check(CLI::IsMember({"A", "B", "C"}));
    layout_cmd->add_option("--tile", tile2_text, "tile dims ROWSxCOLS");
    layout_cmd->add_flag("--dump", "print src -> dst lines (default behavior)");
    layout_cmd->add_option("--report", report_path, "write a JSON report here");

    CLI::App* kernel_cmd = app.add_subcommand("kernel", "schedule the per-tile micro-kernel");
    kernel_cmd->add_option("--tile", tile_text, "tile shape mxkxn");
    kernel_cmd->add_flag("--single-accumulator", single_acc,
                         "diagnostic: serialize on one accumulator");
    kernel_cmd->add_option("--report", report_path, "write a JSON report here");

    CLI::App* sim_cmd = app.add_subcommand("simulate", "timed run of one GEMM on the array");
    sim_cmd->add_option("--size", size_text, "problem size MxKxN")->required();
    sim_cmd->add_option("--tile", tile_text, "tile shape mxkxn");
    sim_cmd->add_option("--seed", seed, "input seed");
    sim_cmd->add_option("--cost", cost_path, "cost-model config file");
    sim_cmd->add_option("--trace", trace_path, "write the event trace here");
    sim_cmd->add_option("--report", report_path, "write the JSON report here");

    CLI::App* gemm_cmd = app.add_subcommand("gemm", "one GEMM through the offload path");
    gemm_cmd->add_option("--size", size_text, "problem size MxKxN (random inputs)");
    gemm_cmd->add_option("--backend", backend_text, "reference-f32 | emulated-npu");
    gemm_cmd->add_option("--seed", seed, "input seed");
    gemm_cmd->add_option("--a", a_path, "A input, MAT0 file");
    gemm_cmd->add_option("--b", b_path, "B input, MAT0 file");
    gemm_cmd->add_option("--out", out_path, "write C as a MAT0 file");
    gemm_cmd->add_flag("--wallclock", wallclock, "also report wall-clock time (diagnostic)");
    gemm_cmd->add_option("--report", report_path, "write the JSON report here");

    CLI::App* train_cmd = app.add_subcommand("train-toy", "overfit a toy GPT-2 on one batch");
    train_cmd->add_option("--config", config_path, "model config file")->required();
    train_cmd->add_option("--backend", backend_text, "reference-f32 | emulated-npu");
    train_cmd->add_option("--steps", steps, "training steps");
    train_cmd->add_option("--seed", seed, "init and data seed");
    train_cmd->add_option("--lr", lr, "learning rate");
    train_cmd->add_option("--clip", clip, "gradient-norm clip");
    train_cmd->add_option("--metrics", metrics_path, "write the JSON metrics here");

    CLI::App* flops_cmd = app.add_subcommand("flops", "print the per-step FLOP ledger");
    flops_cmd->add_option("--config", config_path, "model config file")->required();
    flops_cmd->add_option("--report", report_path, "write a JSON report here");

    std::vector<const char*> argv;
    argv.push_back("npusim");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? 0 : 1;
    }

    RunManifest manifest;
    manifest.args = args;
    manifest.seed = seed;

    try {
        if (app.got_subcommand(plan_cmd)) {
            manifest.subcommand = "plan";
            return cmd_plan(parse_size(size_text), parse_tile(tile_text), emit_sched,
                            dump_arch_flag, report_path, manifest, out);
        }
        if (app.got_subcommand(layout_cmd)) {
            manifest.subcommand = "layout";
            return cmd_layout(op_name, tile2_text, report_path, manifest, out);
        }
        if (app.got_subcommand(kernel_cmd)) {
            manifest.subcommand = "kernel";
            return cmd_kernel(parse_tile(tile_text), single_acc, report_path, manifest, out);
        }
        if (app.got_subcommand(sim_cmd)) {
            manifest.subcommand = "simulate";
            return cmd_simulate(parse_size(size_text), parse_tile(tile_text), seed, cost_path,
                                trace_path, report_path, manifest, out);
        }
        if (app.got_subcommand(gemm_cmd)) {
            manifest.subcommand = "gemm";
            return cmd_gemm(size_text, backend_text, seed, a_path, b_path, out_path, wallclock,
                            report_path, manifest, out);
        }
        if (app.got_subcommand(train_cmd)) {
            manifest.subcommand = "train-toy";
            return cmd_train_toy(config_path, backend_text, steps, seed, lr, clip, metrics_path,
                                 manifest, out);
        }
        if (app.got_subcommand(flops_cmd)) {
            manifest.subcommand = "flops";
            return cmd_flops(config_path, report_path, manifest, out);
        }
    } catch (const CLI::ValidationError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        err << "error " << e.code() << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    err << "usage error: no subcommand\n";
    return 1;
}

} // namespace npusim

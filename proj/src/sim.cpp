#include "npusim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <sstream>

#include "npusim/errors.hpp"
#include "npusim/kernel.hpp"

namespace npusim {

const char* event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::dma_begin: return "dma_begin";
        case EventKind::dma_end: return "dma_end";
        case EventKind::lock_acquire: return "lock_acquire";
        case EventKind::lock_release: return "lock_release";
        case EventKind::compute_begin: return "compute_begin";
        case EventKind::compute_end: return "compute_end";
        default: return "reconfig";
    }
}

namespace {

void check_l3_images(const TilingPlan& plan, const Matrix& a, const Matrix& b) {
    if (a.dtype != DType::bf16 || a.order != Order::row_major ||
        a.rows != plan.problem.M || a.cols != plan.problem.K) {
        throw ShapeMismatch("A must be a padded bf16 row-major M x K image");
    }
    if (b.dtype != DType::bf16 || b.order != Order::col_major ||
        b.rows != plan.problem.K || b.cols != plan.problem.N) {
        throw ShapeMismatch("B must be a padded bf16 column-major K x N image");
    }
}

void widen_a_tile(const Matrix& a, std::int64_t rowblk, std::int64_t kk,
                  const TileShape& t, float* out) {
    const bf16* src = a.bf16_data();
    const std::int64_t Kp = a.cols;
    for (std::int64_t i = 0; i < t.m; ++i) {
        const bf16* row = src + (rowblk * t.m + i) * Kp + kk * t.k;
        float* dst = out + i * t.k;
        for (std::int64_t c = 0; c < t.k; ++c) dst[c] = bf16_to_f32(row[c]);
    }
}

void widen_b_tile(const Matrix& b, std::int64_t kk, std::int64_t colblk,
                  const TileShape& t, float* out) {
    const bf16* src = b.bf16_data();
    const std::int64_t Kp = b.rows;
    for (std::int64_t j = 0; j < t.n; ++j) {
        const bf16* colp = src + (colblk * t.n + j) * Kp + kk * t.k;
        for (std::int64_t r = 0; r < t.k; ++r) out[r * t.n + j] = bf16_to_f32(colp[r]);
    }
}

// Deterministic event engine. Channel codes used in traces:
//   0/1   shim L3->L2 input DMA (A/B)
//   10/11 memory-core L2->L1 distribute broadcast (A/B)
//   20    compute-core L1->L2 join transfer
//   30    memory-core L2->L3 output DMA
//   40    compute
//   50+   L1 buffer-slot locks: 50 + 2*op + slot_index
class Engine {
public:
    Engine(const TilingPlan& plan, const Grid& grid, const CostConfig& cost, bool tracing)
        : plan_(plan), grid_(grid), cost_(cost), tracing_(tracing) {
        S_ = plan.pairs_per_core();
        Kk_ = plan.k_blocks();
        n_out_ = plan.repeat_b * plan.repeat_a;
        total_blocks_ = (S_ + 3) / 4;
        const TileShape& t = plan.tile;
        a_tile_bytes_ = t.m * t.k * 2;
        b_tile_bytes_ = t.k * t.n * 2;
        c_tile_bytes_ = t.m * t.n * 4;
        out_block_bytes_ = 4 * c_tile_bytes_;
        a_in_dur_ = cost.dma_cycles(a_tile_bytes_, cost.l3_l2_bw);
        b_in_dur_ = cost.dma_cycles(b_tile_bytes_, cost.l3_l2_bw);
        a_dist_dur_ = cost.dma_cycles(a_tile_bytes_, cost.l2_l1_bw);
        b_dist_dur_ = cost.dma_cycles(b_tile_bytes_, cost.l2_l1_bw);
        join_dur_ = cost.dma_cycles(c_tile_bytes_, cost.l2_l1_bw);
        out_dur_ = cost.dma_cycles(out_block_bytes_, cost.l3_l2_bw);
        steady_ = t.m * t.k * t.n / (4 * 8 * 4);
        for (auto& c : cols_) c.joined_count.assign(static_cast<std::size_t>(n_out_), 0);
    }

    void execute(std::int64_t reconfig_cycles) {
        now_ = reconfig_cycles;
        if (reconfig_cycles > 0) {
            record(0, EventKind::reconfig, CoreId{0, 0}, 0,
                   "cycles=" + std::to_string(reconfig_cycles));
        }
        sweep();
        while (!pq_.empty()) {
            const Pending p = pq_.top();
            pq_.pop();
            now_ = p.end;
            complete(p);
            sweep();
        }
        for (int col = 0; col < 4; ++col) {
            if (cols_[col].shipped != n_out_) {
                throw Deadlock("column " + std::to_string(col) + " stalled at " +
                               std::to_string(cols_[col].shipped) + "/" + std::to_string(n_out_) +
                               " output blocks");
            }
        }
        for (int r = 0; r < 4; ++r) {
            for (int x = 0; x < 4; ++x) {
                if (cores_[r][x].pairs_done != S_) {
                    throw Deadlock("core stalled mid-stream");
                }
            }
        }
    }

    std::int64_t total_cycles() const { return now_; }
    const LinkBytes& bytes() const { return bytes_; }
    std::int64_t busy_cycles(int r, int x) const { return cores_[r][x].busy_cycles; }
    std::vector<SimEvent> take_events() {
        std::stable_sort(events_.begin(), events_.end(),
                         [](const SimEvent& a, const SimEvent& b) { return a.time < b.time; });
        return std::move(events_);
    }

private:
    struct Pending {
        std::int64_t end;
        int kind;  // 0 input, 1 distribute, 2 join, 3 output, 4 compute
        int col;
        int op;    // 0 A, 1 B
        std::int64_t idx;
        int cx, cy;
        std::int64_t seq;
    };
    struct PendingAfter {
        bool operator()(const Pending& a, const Pending& b) const {
            return a.end != b.end ? a.end > b.end : a.seq > b.seq;
        }
    };

    struct ColState {
        bool shim_busy = false;
        std::int64_t in_pos = 0;          // interleave position, 0..2S-1
        std::int64_t arrived[2] = {0, 0}; // input tiles landed in L2 per op
        std::int64_t drained[2] = {0, 0}; // L2 blocks fully distributed
        bool dist_busy[2] = {false, false};
        std::int64_t dist_idx[2] = {0, 0};
        std::int64_t dist_done[2] = {0, 0};
        bool join_busy = false;
        std::vector<int> joined_count;
        std::int64_t out_next = 0;
        std::int64_t shipped = 0;
    };

    struct CoreState {
        bool busy = false;
        std::int64_t pairs_done = 0;
        // Finished C tiles waiting for the join channel. The compute gate
        // (e < emitted + 2) caps this at the two physical C buffers.
        std::deque<std::int64_t> emit_queue;
        std::int64_t emitted = 0;  // join transfers completed
        std::int64_t busy_cycles = 0;
    };

    void record(std::int64_t time, EventKind kind, CoreId core, int channel,
                const std::string& detail) {
        if (!tracing_) return;
        events_.push_back({time, kind, core, channel, seq_++, detail});
    }

    void push(std::int64_t end, int kind, int col, int op, std::int64_t idx, int cx, int cy) {
        pq_.push(Pending{end, kind, col, op, idx, cx, cy, seq_++});
    }

    std::int64_t block_count_done(std::int64_t tiles_done) const {
        return tiles_done == S_ ? total_blocks_ : tiles_done / 4;
    }

    bool try_start_input(int col) {
        ColState& c = cols_[col];
        if (c.shim_busy || c.in_pos >= 2 * S_) return false;
        const int op = static_cast<int>(c.in_pos % 2);
        const std::int64_t s = c.in_pos / 2;
        if (s / 4 >= c.drained[op] + 2) return false;  // both L2 block slots occupied
        c.shim_busy = true;
        const std::int64_t dur = op == 0 ? a_in_dur_ : b_in_dur_;
        record(now_, EventKind::dma_begin, CoreId{col, 0}, op,
               std::string(op == 0 ? "A" : "B") + " in s=" + std::to_string(s));
        push(now_ + dur, 0, col, op, s, 0, 0);
        return true;
    }

    bool try_start_output(int col) {
        ColState& c = cols_[col];
        if (c.shim_busy || c.out_next >= n_out_) return false;
        if (c.joined_count[static_cast<std::size_t>(c.out_next)] != 4) return false;
        c.shim_busy = true;
        record(now_, EventKind::dma_begin, CoreId{col, 1}, 30,
               "C out e=" + std::to_string(c.out_next));
        push(now_ + out_dur_, 3, col, 0, c.out_next, 0, 0);
        return true;
    }

    CoreId dist_dest(int col, int op, int t) const {
        return op == 0 ? CoreId{t, col + 2} : CoreId{col, 2 + t};
    }

    bool try_start_dist(int col, int op) {
        ColState& c = cols_[col];
        if (c.dist_busy[op]) return false;
        const std::int64_t s = c.dist_idx[op];
        if (s >= S_ || s >= c.arrived[op]) return false;
        // Broadcast: every destination core must have L1 slot s%2 free.
        for (int t = 0; t < 4; ++t) {
            const CoreId dst = dist_dest(col, op, t);
            if (cores_[dst.y - 2][dst.x].pairs_done < s - 1) return false;
        }
        c.dist_busy[op] = true;
        const std::int64_t dur = op == 0 ? a_dist_dur_ : b_dist_dur_;
        const std::string tag = std::string(op == 0 ? "A" : "B") + " dist s=" + std::to_string(s);
        record(now_, EventKind::dma_begin, CoreId{col, 1}, 10 + op, tag);
        const int slot = static_cast<int>(s % 2);
        for (int t = 0; t < 4; ++t) {
            record(now_, EventKind::lock_acquire, dist_dest(col, op, t), 50 + 2 * op + slot,
                   tag + " writer");
        }
        push(now_ + dur, 1, col, op, s, 0, 0);
        return true;
    }

    bool try_start_join(int r, int x) {
        CoreState& core = cores_[r][x];
        if (core.emit_queue.empty()) return false;
        ColState& c = cols_[x];
        if (c.join_busy) return false;
        const std::int64_t e = core.emit_queue.front();
        if (e >= c.shipped + 2) return false;  // join block slot busy
        core.emit_queue.pop_front();
        c.join_busy = true;
        record(now_, EventKind::dma_begin, CoreId{x, r + 2}, 20,
               "C join e=" + std::to_string(e));
        push(now_ + join_dur_, 2, x, 0, e, x, r + 2);
        return true;
    }

    bool try_start_compute(int r, int x) {
        CoreState& core = cores_[r][x];
        if (core.busy) return false;
        const std::int64_t s = core.pairs_done;
        if (s >= S_) return false;
        if (cols_[r].dist_done[0] <= s) return false;  // A tile not delivered yet
        if (cols_[x].dist_done[1] <= s) return false;  // B tile not delivered yet
        const std::int64_t kk = s % Kk_;
        const std::int64_t e = s / Kk_;
        if (kk == 0 && e >= core.emitted + 2) return false;  // output slot still draining
        core.busy = true;
        std::int64_t dur = steady_;
        if (kk == 0) dur += cost_.preamble;
        if (kk == Kk_ - 1) dur += cost_.postamble;
        const CoreId id{x, r + 2};
        const int slot = static_cast<int>(s % 2);
        record(now_, EventKind::lock_acquire, id, 50 + slot, "pair s=" + std::to_string(s) + " reader A");
        record(now_, EventKind::lock_acquire, id, 52 + slot, "pair s=" + std::to_string(s) + " reader B");
        record(now_, EventKind::compute_begin, id, 40,
               "pair s=" + std::to_string(s) + " kk=" + std::to_string(kk));
        push(now_ + dur, 4, 0, 0, s, x, r + 2);
        core.busy_cycles += dur;
        return true;
    }

    void sweep() {
        bool progress = true;
        while (progress) {
            progress = false;
            for (int col = 0; col < 4; ++col) progress |= try_start_input(col);
            for (int col = 0; col < 4; ++col) progress |= try_start_output(col);
            for (int col = 0; col < 4; ++col) {
                progress |= try_start_dist(col, 0);
                progress |= try_start_dist(col, 1);
            }
            for (int r = 0; r < 4; ++r) {
                for (int x = 0; x < 4; ++x) {
                    progress |= try_start_join(r, x);
                    progress |= try_start_compute(r, x);
                }
            }
        }
    }

    void complete(const Pending& p) {
        switch (p.kind) {
            case 0: {  // input transfer landed in L2
                ColState& c = cols_[p.col];
                c.shim_busy = false;
                c.in_pos += 1;
                c.arrived[p.op] = p.idx + 1;
                if (p.op == 0) bytes_.a_l3_to_l2 += a_tile_bytes_;
                else bytes_.b_l3_to_l2 += b_tile_bytes_;
                record(now_, EventKind::dma_end, CoreId{p.col, 0}, p.op,
                       std::string(p.op == 0 ? "A" : "B") + " in s=" + std::to_string(p.idx));
                break;
            }
            case 1: {  // distribute broadcast delivered
                ColState& c = cols_[p.col];
                c.dist_busy[p.op] = false;
                c.dist_idx[p.op] = p.idx + 1;
                c.dist_done[p.op] = p.idx + 1;
                c.drained[p.op] = block_count_done(p.idx + 1);
                const std::int64_t tile_bytes = p.op == 0 ? a_tile_bytes_ : b_tile_bytes_;
                if (p.op == 0) bytes_.a_l2_to_l1 += 4 * tile_bytes;
                else bytes_.b_l2_to_l1 += 4 * tile_bytes;
                const std::string tag =
                    std::string(p.op == 0 ? "A" : "B") + " dist s=" + std::to_string(p.idx);
                const int slot = static_cast<int>(p.idx % 2);
                for (int t = 0; t < 4; ++t) {
                    record(now_, EventKind::lock_release, dist_dest(p.col, p.op, t),
                           50 + 2 * p.op + slot, tag + " writer");
                }
                record(now_, EventKind::dma_end, CoreId{p.col, 1}, 10 + p.op, tag);
                break;
            }
            case 2: {  // join transfer: one C tile moved L1 -> L2
                ColState& c = cols_[p.col];
                c.join_busy = false;
                CoreState& core = cores_[p.cy - 2][p.cx];
                core.emitted += 1;
                c.joined_count[static_cast<std::size_t>(p.idx)] += 1;
                bytes_.c_l1_to_l2 += c_tile_bytes_;
                record(now_, EventKind::dma_end, CoreId{p.cx, p.cy}, 20,
                       "C join e=" + std::to_string(p.idx));
                break;
            }
            case 3: {  // joined block shipped to L3
                ColState& c = cols_[p.col];
                c.shim_busy = false;
                c.out_next = p.idx + 1;
                c.shipped = p.idx + 1;
                bytes_.c_l2_to_l3 += out_block_bytes_;
                record(now_, EventKind::dma_end, CoreId{p.col, 1}, 30,
                       "C out e=" + std::to_string(p.idx));
                break;
            }
            case 4: {  // compute pass done
                CoreState& core = cores_[p.cy - 2][p.cx];
                core.busy = false;
                core.pairs_done = p.idx + 1;
                const std::int64_t kk = p.idx % Kk_;
                const CoreId id{p.cx, p.cy};
                const int slot = static_cast<int>(p.idx % 2);
                record(now_, EventKind::compute_end, id, 40,
                       "pair s=" + std::to_string(p.idx) + " kk=" + std::to_string(kk));
                record(now_, EventKind::lock_release, id, 50 + slot,
                       "pair s=" + std::to_string(p.idx) + " reader A");
                record(now_, EventKind::lock_release, id, 52 + slot,
                       "pair s=" + std::to_string(p.idx) + " reader B");
                if (kk == Kk_ - 1) {
                    core.emit_queue.push_back(p.idx / Kk_);
                }
                break;
            }
            default: break;
        }
    }

    const TilingPlan& plan_;
    const Grid& grid_;
    const CostConfig& cost_;
    bool tracing_;
    std::vector<SimEvent> events_;
    std::int64_t seq_ = 0;
    std::int64_t now_ = 0;
    std::int64_t S_ = 0, Kk_ = 0, n_out_ = 0, total_blocks_ = 0;
    std::int64_t a_tile_bytes_ = 0, b_tile_bytes_ = 0, c_tile_bytes_ = 0, out_block_bytes_ = 0;
    std::int64_t a_in_dur_ = 0, b_in_dur_ = 0, a_dist_dur_ = 0, b_dist_dur_ = 0;
    std::int64_t join_dur_ = 0, out_dur_ = 0, steady_ = 0;
    ColState cols_[4];
    CoreState cores_[4][4];
    std::priority_queue<Pending, std::vector<Pending>, PendingAfter> pq_;
    LinkBytes bytes_;
};

} // namespace

Matrix functional_gemm(const TilingPlan& plan, const Matrix& a, const Matrix& b) {
    check_l3_images(plan, a, b);
    const TileShape& t = plan.tile;
    Matrix c = Matrix::zeros(plan.problem.M, plan.problem.N, DType::f32, Order::row_major);
    std::vector<float> af(static_cast<std::size_t>(t.m * t.k));
    std::vector<float> bf(static_cast<std::size_t>(t.k * t.n));
    std::vector<float> ct(static_cast<std::size_t>(t.m * t.n));
    const std::int64_t events = plan.repeat_b * plan.repeat_a;
    for (int y = 2; y <= 5; ++y) {
        for (int x = 0; x < 4; ++x) {
            const CoreId core{x, y};
            for (std::int64_t e = 0; e < events; ++e) {
                const auto [rowblk, colblk] = core_output_block(plan, core, e);
                std::fill(ct.begin(), ct.end(), 0.0f);
                for (std::int64_t kk = 0; kk < plan.k_blocks(); ++kk) {
                    widen_a_tile(a, rowblk, kk, t, af.data());
                    widen_b_tile(b, kk, colblk, t, bf.data());
                    tile_matmul_accumulate_f32(af.data(), bf.data(), ct.data(), t.m, t.k, t.n);
                }
                float* out = c.f32_data();
                for (std::int64_t i = 0; i < t.m; ++i) {
                    std::copy(ct.begin() + i * t.n, ct.begin() + (i + 1) * t.n,
                              out + (rowblk * t.m + i) * plan.problem.N + colblk * t.n);
                }
            }
        }
    }
    return c;
}

SimReport run(const TilingPlan& plan, const Grid& grid, const Matrix& a, const Matrix& b,
              const CostConfig& cost, const RunOptions& options) {
    check_l3_images(plan, a, b);
    if (plan.tile.l1_footprint_bytes() > grid.mem.l1_bytes) {
        throw CapacityExceeded("L1 footprint exceeds this grid's capacity");
    }
    const TileShape& t = plan.tile;
    const std::int64_t l2_use = 16 * t.m * t.k + 16 * t.k * t.n + 32 * t.m * t.n;
    if (l2_use > grid.mem.l2_bytes) {
        throw CapacityExceeded("L2 block buffers exceed capacity: need " + std::to_string(l2_use) +
                               " bytes, have " + std::to_string(grid.mem.l2_bytes));
    }

    SimReport report;
    report.output = functional_gemm(plan, a, b);
    report.reconfig_cycles = options.reconfig_cycles;

    Engine engine(plan, grid, cost, options.trace);
    engine.execute(options.reconfig_cycles);
    report.total_cycles = engine.total_cycles();
    report.bytes = engine.bytes();
    report.traced = options.trace;
    if (options.trace) report.events = engine.take_events();

    std::int64_t busy_sum = 0;
    for (int y = 2; y <= 5; ++y) {
        for (int x = 0; x < 4; ++x) {
            CoreStats cs;
            cs.core = CoreId{x, y};
            cs.busy_cycles = engine.busy_cycles(y - 2, x);
            cs.utilization = report.total_cycles > 0
                                 ? static_cast<double>(cs.busy_cycles) / static_cast<double>(report.total_cycles)
                                 : 0.0;
            busy_sum += cs.busy_cycles;
            report.cores.push_back(cs);
        }
    }
    report.aggregate_utilization =
        report.total_cycles > 0
            ? static_cast<double>(busy_sum) / (16.0 * static_cast<double>(report.total_cycles))
            : 0.0;
    const double seconds =
        report.total_cycles > 0 ? static_cast<double>(report.total_cycles) / grid.compute.clock_hz : 0.0;
    const double flops = 2.0 * static_cast<double>(plan.problem.M) *
                         static_cast<double>(plan.problem.K) * static_cast<double>(plan.problem.N);
    report.model_flops_per_second = seconds > 0 ? flops / seconds : 0.0;
    return report;
}

std::int64_t reconfigure(const TilingPlan& from, const TilingPlan& to, ReconfigMode mode,
                         const CostConfig& cost) {
    if (mode == ReconfigMode::minimal && !(from.tile == to.tile)) {
        throw TileShapeMismatch("minimal reconfiguration requires identical tile shapes");
    }
    const std::int64_t params = 16 * 2 * cost.param_write;
    const bool same_size = from.problem == to.problem;
    if (mode == ReconfigMode::minimal) {
        if (same_size) return params;  // descriptors unchanged, rewrite the two runtime words
        return 4 * cost.shim_descriptor + params;
    }
    const std::int64_t all_cores = 24;
    const std::int64_t all_switches = 24;
    return all_cores * cost.core_config + all_switches * cost.switch_config +
           4 * cost.shim_descriptor + params;
}

const std::vector<SimEvent>& trace(const SimReport& report) {
    if (!report.traced) throw TracingDisabled("run was executed without tracing");
    return report.events;
}

std::string format_trace(const std::vector<SimEvent>& events) {
    std::ostringstream out;
    for (const SimEvent& e : events) {
        out << "t=" << e.time << " " << event_kind_name(e.kind) << " core=(" << e.core.x << ","
            << e.core.y << ") ch=" << e.channel << " seq=" << e.seq << " " << e.detail << "\n";
    }
    return out.str();
}

Matrix reference_gemm(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw ShapeMismatch("inner dimensions differ");
    const Matrix ar = to_order(to_f32(a), Order::row_major);
    const Matrix br = to_order(to_f32(b), Order::row_major);
    Matrix c = Matrix::zeros(a.rows, b.cols, DType::f32, Order::row_major);
    tile_matmul_accumulate_f32(ar.f32_data(), br.f32_data(), c.f32_data(), a.rows, a.cols, b.cols);
    return c;
}

} // namespace npusim

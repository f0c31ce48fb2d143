#include "npusim/kernel.hpp"

#include <map>

#include "npusim/errors.hpp"

namespace npusim {

std::int64_t KernelSchedule::vmac_count() const {
    std::int64_t n = 0;
    for (const MicroOp& op : ops) n += op.kind == OpKind::VMAC;
    return n;
}

std::int64_t KernelSchedule::steady_nop_count() const {
    std::int64_t n = 0;
    for (const MicroOp& op : ops) {
        if (op.kind == OpKind::NOP && op.issue_cycle >= preamble_cycles &&
            op.issue_cycle < preamble_cycles + steady_cycles) {
            ++n;
        }
    }
    return n;
}

double KernelSchedule::utilization() const {
    return total_cycles() == 0 ? 0.0 : static_cast<double>(vmac_count()) / static_cast<double>(total_cycles());
}

void micro_vmac(const bf16* a, const bf16* b, float* acc) {
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            float s = acc[r * 4 + c];
            for (int p = 0; p < 8; ++p) {
                s = s + bf16_to_f32(a[r * 8 + p]) * bf16_to_f32(b[p * 4 + c]);
            }
            acc[r * 4 + c] = s;
        }
    }
}

void tile_matmul_accumulate_f32(const float* a, const float* b, float* c,
                                std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const float av = arow[kk];
            const float* brow = b + kk * n;
            for (std::int64_t j = 0; j < n; ++j) {
                crow[j] = crow[j] + av * brow[j];
            }
        }
    }
}

void tile_matmul_accumulate(const bf16* a, const bf16* b, float* c, const TileShape& tile,
                            KernelWorkspace& ws) {
    const std::int64_t mk = tile.m * tile.k;
    const std::int64_t kn = tile.k * tile.n;
    ws.a_f32.resize(static_cast<std::size_t>(mk));
    ws.b_f32.resize(static_cast<std::size_t>(kn));
    for (std::int64_t i = 0; i < mk; ++i) ws.a_f32[static_cast<std::size_t>(i)] = bf16_to_f32(a[i]);
    for (std::int64_t i = 0; i < kn; ++i) ws.b_f32[static_cast<std::size_t>(i)] = bf16_to_f32(b[i]);
    tile_matmul_accumulate_f32(ws.a_f32.data(), ws.b_f32.data(), c, tile.m, tile.k, tile.n);
}

void tile_matmul_accumulate(const bf16* a, const bf16* b, float* c, const TileShape& tile) {
    KernelWorkspace ws;
    tile_matmul_accumulate(a, b, c, tile, ws);
}

KernelSchedule schedule_kernel(const TileShape& tile, const ComputeSpec& cspec,
                               bool single_accumulator,
                               std::int64_t preamble_cycles, std::int64_t postamble_cycles) {
    if (tile.m % 4 != 0 || tile.k % 8 != 0 || tile.n % 4 != 0) {
        throw MisalignedTile("kernel schedule needs m % 4, k % 8, n % 4");
    }
    const std::int64_t micro_count = (tile.m / 4) * (tile.n / 4);
    const int latency = cspec.vmac_latency_cycles;
    const std::int64_t k_steps = tile.k / 8;

    KernelSchedule s;
    s.preamble_cycles = preamble_cycles;
    s.postamble_cycles = postamble_cycles;

    // Loads for the first operands overlap the preamble; shuffles and the
    // final stores co-issue in dedicated slots, contributing no cycles.
    for (std::int64_t c = 0; c < preamble_cycles; ++c) {
        s.ops.push_back({c % 2 == 0 ? OpKind::VLOAD : OpKind::VSHUFFLE, -1, c});
    }

    std::int64_t cycle = preamble_cycles;
    if (single_accumulator) {
        // Diagnostic: every VMAC depends on the previous one through
        // register 0, forcing latency-1 NOPs between issues.
        const std::int64_t total_vmacs = micro_count * k_steps;
        for (std::int64_t v = 0; v < total_vmacs; ++v) {
            s.ops.push_back({OpKind::VMAC, 0, cycle++});
            if (v + 1 < total_vmacs) {
                for (int nop = 0; nop < latency - 1; ++nop) {
                    s.ops.push_back({OpKind::NOP, -1, cycle++});
                }
            }
        }
        s.steady_cycles = cycle - preamble_cycles;
    } else {
        if (micro_count < latency) {
            throw HazardUnavoidable("tile yields " + std::to_string(micro_count) +
                                    " output micro-tiles; at least " + std::to_string(latency) +
                                    " are needed to cover the VMAC latency");
        }
        const std::int64_t flights = micro_count / 4;
        const std::int64_t tail = micro_count % 4;
        for (std::int64_t f = 0; f < flights; ++f) {
            for (std::int64_t kc = 0; kc < k_steps; ++kc) {
                for (int q = 0; q < 4; ++q) {
                    s.ops.push_back({OpKind::VMAC, q, cycle++});
                }
            }
        }
        s.steady_cycles = cycle - preamble_cycles;
        if (tail != 0) {
            // Remainder flight cannot fill the rotation; pad with NOPs. This
            // lands in the postamble accounting, keeping the steady window
            // NOP-free for aligned shapes.
            for (std::int64_t kc = 0; kc < k_steps; ++kc) {
                for (int q = 0; q < 4; ++q) {
                    if (q < tail) s.ops.push_back({OpKind::VMAC, q, cycle++});
                    else s.ops.push_back({OpKind::NOP, -1, cycle++});
                }
            }
            s.postamble_cycles += tail == 0 ? 0 : k_steps * 4;
        }
    }
    for (std::int64_t c = 0; c < postamble_cycles; ++c) {
        s.ops.push_back({OpKind::VSTORE, -1, cycle + c});
    }
    return s;
}

bool hazard_free(const KernelSchedule& schedule, int latency) {
    std::map<int, std::int64_t> last_issue;
    for (const MicroOp& op : schedule.ops) {
        if (op.kind != OpKind::VMAC) continue;
        const auto it = last_issue.find(op.accumulator_id);
        if (it != last_issue.end() && op.issue_cycle - it->second < latency) return false;
        last_issue[op.accumulator_id] = op.issue_cycle;
    }
    return true;
}

} // namespace npusim

#pragma once

#include <cstdint>
#include <vector>

#include "npusim/arch.hpp"
#include "npusim/bfloat16.hpp"
#include "npusim/plan.hpp"

namespace npusim {

enum class OpKind { VMAC, VLOAD, VSTORE, VSHUFFLE, NOP };

struct MicroOp {
    OpKind kind;
    int accumulator_id;        // -1 for non-VMAC slots
    std::int64_t issue_cycle;
};

// Static issue schedule for one (A-tile, B-tile) accumulate pass.
struct KernelSchedule {
    std::vector<MicroOp> ops;
    std::int64_t preamble_cycles = 0;
    std::int64_t steady_cycles = 0;
    std::int64_t postamble_cycles = 0;

    std::int64_t total_cycles() const { return preamble_cycles + steady_cycles + postamble_cycles; }
    std::int64_t vmac_count() const;
    std::int64_t steady_nop_count() const;  // NOPs issued inside the steady window
    double utilization() const;             // VMACs per total cycle
};

// One vector instruction: (4x8) x (8x4) multiply accumulated into a 4x4 f32
// register. Inputs row-major; products are formed in f32 after exact bf16
// widening, each product added with its own rounding, reduction index
// ascending.
void micro_vmac(const bf16* a, const bf16* b, float* acc);

// c += a * b for one tile pair; a is m x k, b is k x n, c is m x n, all
// row-major. Per output element the reduction runs over k ascending as a
// sequential multiply-add chain, matching the micro_vmac composition exactly.
void tile_matmul_accumulate(const bf16* a, const bf16* b, float* c, const TileShape& tile);

// Scratch for the widened inputs so hot loops do not allocate.
struct KernelWorkspace {
    std::vector<float> a_f32;
    std::vector<float> b_f32;
};

void tile_matmul_accumulate(const bf16* a, const bf16* b, float* c, const TileShape& tile,
                            KernelWorkspace& ws);

// f32 variant used once inputs are widened; identical operation order.
void tile_matmul_accumulate_f32(const float* a, const float* b, float* c,
                                std::int64_t m, std::int64_t k, std::int64_t n);

// Issue schedule: output micro-tiles are grouped in flights of four, each
// flight held in the four accumulator registers; within a flight the four
// VMACs issue back-to-back, so a register is rewritten exactly
// vmac_latency_cycles after its previous write and the steady window needs
// no NOPs. single_accumulator is a diagnostic mode that serializes every
// VMAC through register 0.
KernelSchedule schedule_kernel(const TileShape& tile, const ComputeSpec& cspec,
                               bool single_accumulator = false,
                               std::int64_t preamble_cycles = 8,
                               std::int64_t postamble_cycles = 8);

// True if no VMAC writes an accumulator sooner than `latency` cycles after
// the previous VMAC writing the same accumulator.
bool hazard_free(const KernelSchedule& schedule, int latency);

} // namespace npusim

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "npusim/arch.hpp"
#include "npusim/cost.hpp"
#include "npusim/matrix.hpp"
#include "npusim/plan.hpp"

namespace npusim {

enum class EventKind {
    dma_begin,
    dma_end,
    lock_acquire,
    lock_release,
    compute_begin,
    compute_end,
    reconfig
};

const char* event_kind_name(EventKind k);

struct SimEvent {
    std::int64_t time = 0;
    EventKind kind = EventKind::dma_begin;
    CoreId core;           // subject core (owner of the channel or slot)
    int channel = 0;       // see sim.cpp channel codes
    std::int64_t seq = 0;  // global scheduling order, unique
    std::string detail;
};

// Byte counters per link level, split by operand stream. L2->L1 counts bytes
// arriving at compute cores, so a broadcast of one tile to four cores counts
// four times its size.
struct LinkBytes {
    std::int64_t a_l3_to_l2 = 0;
    std::int64_t b_l3_to_l2 = 0;
    std::int64_t c_l2_to_l3 = 0;
    std::int64_t a_l2_to_l1 = 0;
    std::int64_t b_l2_to_l1 = 0;
    std::int64_t c_l1_to_l2 = 0;

    std::int64_t input_l3_to_l2() const { return a_l3_to_l2 + b_l3_to_l2; }
};

struct CoreStats {
    CoreId core;
    std::int64_t busy_cycles = 0;
    double utilization = 0.0;
};

struct SimReport {
    std::int64_t total_cycles = 0;
    std::int64_t reconfig_cycles = 0;
    std::vector<CoreStats> cores;  // 16 compute cores, row-major from row 2
    LinkBytes bytes;
    double aggregate_utilization = 0.0;
    double model_flops_per_second = 0.0;
    Matrix output;  // padded problem.M x problem.N, f32 row-major
    bool traced = false;
    std::vector<SimEvent> events;
};

struct RunOptions {
    bool trace = false;
    std::int64_t reconfig_cycles = 0;  // charged before the first transfer
};

// Untimed functional evaluation: replays every compute core's lockstep
// stream order. Inputs are the padded L3 images the plan expects
// (A: bf16 row-major M x K, B: bf16 column-major K x N, padded sizes).
Matrix functional_gemm(const TilingPlan& plan, const Matrix& a, const Matrix& b);

// Deterministic event-driven execution: same functional result, plus cycle
// counts, per-core utilization, byte conservation and an optional trace.
SimReport run(const TilingPlan& plan, const Grid& grid, const Matrix& a, const Matrix& b,
              const CostConfig& cost, const RunOptions& options = RunOptions{});

enum class ReconfigMode { minimal, full };

// Cycle cost of switching the array from one plan to another. minimal mode
// rewrites shim DMA descriptors and the two per-core runtime parameters
// (parameter writes only when the padded problem size is unchanged); full
// mode re-walks every core and stream switch on top of that. minimal
// requires both plans to share a tile shape.
std::int64_t reconfigure(const TilingPlan& from, const TilingPlan& to, ReconfigMode mode,
                         const CostConfig& cost);

// Ordered trace of a traced run; throws TracingDisabled otherwise.
const std::vector<SimEvent>& trace(const SimReport& report);

std::string format_trace(const std::vector<SimEvent>& events);

// Plain f32 row-major GEMM, the reference backend's core.
Matrix reference_gemm(const Matrix& a, const Matrix& b);

} // namespace npusim

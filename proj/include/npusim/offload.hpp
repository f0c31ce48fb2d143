#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "npusim/cost.hpp"
#include "npusim/matrix.hpp"
#include "npusim/plan.hpp"
#include "npusim/sim.hpp"

namespace npusim {

enum class Backend { reference_f32, emulated_npu };

Backend backend_from_name(const std::string& name);  // "reference-f32" | "emulated-npu"
const char* backend_name(Backend b);

// One GEMM as the host sees it: operands carry their own storage order, the
// flags request a mathematical transpose. After applying the flags the
// effective operands must be A: M x K and B: K x N.
struct GemmRequest {
    Matrix a;
    Matrix b;
    bool transpose_a = false;
    bool transpose_b = false;
};

// Model costs in cycles for the host-visible stages of one dispatch.
struct StageTimings {
    std::int64_t input_copy = 0;   // host buffers -> shared input buffers
    std::int64_t transpose = 0;    // physical transposes performed on the host
    std::int64_t kernel = 0;       // device time, reconfiguration included
    std::int64_t output_copy = 0;  // shared output buffer -> host
    std::int64_t input_sync = 0;   // optional driver costs, zero by default
    std::int64_t output_sync = 0;

    std::int64_t total() const {
        return input_copy + transpose + kernel + output_copy + input_sync + output_sync;
    }
};

struct GemmResult {
    Matrix c;  // f32 row-major, caller's (unpadded) M x N
    SimReport report;
    StageTimings breakdown;
    bool cache_hit = false;
    std::int64_t reconfig_cycles = 0;
};

// Per-problem-size resource pool plus dispatch state. Single owner: calls are
// serialized, there is one emulated device.
class OffloadContext {
public:
    OffloadContext(Backend backend, const TileShape& tile, const Grid& grid,
                   const CostConfig& cost);

    Backend backend() const { return backend_; }
    const TileShape& tile() const { return tile_; }
    const Grid& grid() const { return grid_; }
    const CostConfig& cost() const { return cost_; }

    // Eagerly plan a size so later dispatches hit the cache.
    void prepare(const ProblemSize& size);
    bool is_cached(const ProblemSize& size) const;
    std::size_t cache_size() const { return cache_.size(); }
    std::int64_t plans_built = 0;
    std::int64_t reconfig_total_cycles = 0;

    const TilingPlan& plan_for(const ProblemSize& size);

    // Reconfiguration cycles charged for switching the device to `size`:
    // zero on a repeat of the previous size, a full configuration the first
    // time the device is touched, the minimal descriptor-plus-parameter
    // rewrite otherwise.
    std::int64_t account_reconfig(const ProblemSize& size);

    std::optional<ProblemSize> last_size() const { return last_size_; }

private:
    Backend backend_;
    TileShape tile_;
    Grid grid_;
    CostConfig cost_;
    std::map<ProblemSize, TilingPlan> cache_;
    std::optional<ProblemSize> last_size_;
};

OffloadContext init(const std::vector<ProblemSize>& sizes, const TileShape& tile,
                    Backend backend, const Grid& grid, const CostConfig& cost);

// Physical layout change: same logical matrix, opposite storage order. Worker
// count only affects wall time, never bytes (each element is written once by
// exactly one worker).
Matrix transpose_copy(const Matrix& src, int workers = 1);

GemmResult matmul(OffloadContext& ctx, const GemmRequest& req);

struct DivergenceStats {
    ProblemSize size;
    double mean_rel = 0.0;
    double max_rel = 0.0;
};

// Run each size with seeded uniform inputs on this context's backend and on a
// fresh reference-f32 context, and report elementwise relative divergence.
std::vector<DivergenceStats> compare_oracle(OffloadContext& ctx,
                                            const std::vector<ProblemSize>& sizes,
                                            std::uint64_t seed);

// Elementwise |x - r| / max(|r|, floor) summarized over two same-shape f32
// matrices.
DivergenceStats divergence(const Matrix& x, const Matrix& r);

} // namespace npusim

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "npusim/offload.hpp"

namespace npusim {

class Rng;

struct ModelConfig {
    std::int64_t n_layers = 0;
    std::int64_t d_model = 0;
    std::int64_t n_heads = 0;
    std::int64_t d_ff = 0;  // defaults to 4 * d_model when absent from a file
    std::int64_t vocab_size = 0;
    std::int64_t seq_len = 0;

    static ModelConfig load(const std::string& path);
    static ModelConfig from_text(const std::string& text);
    void validate() const;  // throws ConfigError

    std::int64_t head_dim() const { return d_model / n_heads; }
};

// All fine-tunable tensors. Weight matrices hold the mathematical (in x out)
// matrix in column-major storage, which is byte-identical to the usual
// (out x in) row-major convention; activations are row-major. Embeddings are
// row-major lookup tables. The logits projection reuses wte (weight tying).
struct ParamStore {
    struct Layer {
        std::vector<float> ln1w, ln1b;
        std::vector<float> qkvw, qkvb;          // C x 3C, 3C
        std::vector<float> attprojw, attprojb;  // C x C, C
        std::vector<float> ln2w, ln2b;
        std::vector<float> fcw, fcb;            // C x 4C, 4C
        std::vector<float> fcprojw, fcprojb;    // 4C x C, C
    };

    std::vector<float> wte;  // V x C row-major
    std::vector<float> wpe;  // T x C row-major
    std::vector<Layer> layers;
    std::vector<float> lnfw, lnfb;

    static ParamStore shaped(const ModelConfig& cfg);            // zero-filled
    static ParamStore init(const ModelConfig& cfg, Rng& rng);    // gpt2-style random init
    std::int64_t param_count() const;
    void zero();

    // Stable enumeration of every tensor, for optimizers and checks.
    std::vector<std::pair<std::string, std::vector<float>*>> entries();
};

struct Activations {
    struct Layer {
        std::vector<float> ln1, qkv, atty, attproj, residual2;
        std::vector<float> ln1_mean, ln1_rstd, ln2_mean, ln2_rstd;
        std::vector<float> preatt, att;  // H x T x T
        std::vector<float> ln2, fch, fch_gelu, fcproj, residual3;
    };

    std::vector<float> encoded;  // T x C
    std::vector<Layer> layers;
    std::vector<float> lnf, lnf_mean, lnf_rstd;
    std::vector<float> logits, probs;  // T x V
    std::vector<float> losses;         // T

    static Activations shaped(const ModelConfig& cfg);
};

// Framework-free GPT-2 at desk scale. Every GEMM goes through the offload
// context handed to forward/backward; everything else runs on the host in f32.
class Gpt2 {
public:
    Gpt2(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    ParamStore& grads() { return grads_; }
    Activations& acts() { return acts_; }

    // Returns mean next-token loss when targets are given, otherwise 0; logits
    // and intermediate activations are left in acts().
    float forward(OffloadContext& ctx, const std::vector<int>& tokens,
                  const std::vector<int>* targets = nullptr);
    // Requires a preceding forward with the same tokens/targets.
    void backward(OffloadContext& ctx, const std::vector<int>& tokens,
                  const std::vector<int>& targets);
    // forward + backward + global-norm gradient clip + SGD.
    float train_step(OffloadContext& ctx, const std::vector<int>& tokens,
                     const std::vector<int>& targets, float lr, float clip = 1.0f);

private:
    ModelConfig cfg_;
    ParamStore params_;
    ParamStore grads_;
    Activations acts_;
};

struct FlopEntry {
    std::string name;
    double forward = 0.0;
    double backward = 0.0;
};

struct FlopLedger {
    std::vector<FlopEntry> entries;
    double gemm_forward = 0.0;
    double gemm_backward = 0.0;
    double attention_forward = 0.0;
    double attention_backward = 0.0;
    double other_forward = 0.0;
    double other_backward = 0.0;

    double forward_total() const { return gemm_forward + attention_forward + other_forward; }
    double backward_total() const { return gemm_backward + attention_backward + other_backward; }
    double step_total() const { return forward_total() + backward_total(); }
    std::string to_text() const;
};

// One entry per GEMM call site with its per-step invocation count (layer
// multiplicity folded in). `backward` marks gradient-pass sites.
struct GemmCallSite {
    std::string name;
    ProblemSize size;
    std::int64_t count = 0;
    bool backward = false;
};

std::vector<GemmCallSite> gemm_call_sites(const ModelConfig& cfg);
std::vector<ProblemSize> extract_gemm_sizes(const ModelConfig& cfg);  // deduplicated
FlopLedger count_flops(const ModelConfig& cfg);

// Deterministic synthetic corpus: a short repeating pattern of tokens, the
// overfit-one-batch task used by the training tests.
std::vector<int> synthetic_tokens(const ModelConfig& cfg, std::uint64_t seed, std::int64_t count);

// FNV-1a over the f32 bit patterns, the golden-output fingerprint.
std::uint64_t fnv1a_digest(const float* v, std::size_t n);

} // namespace npusim

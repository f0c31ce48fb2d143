#include "npusim/gpt2.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

#include "npusim/errors.hpp"
#include "npusim/kvfile.hpp"
#include "npusim/rng.hpp"

namespace npusim {

ModelConfig ModelConfig::from_text(const std::string& text) {
    const auto kv = parse_kv_text(text);
    ModelConfig cfg;
    cfg.n_layers = kv_int_required(kv, "n_layers");
    cfg.d_model = kv_int_required(kv, "d_model");
    cfg.n_heads = kv_int_required(kv, "n_heads");
    cfg.vocab_size = kv_int_required(kv, "vocab_size");
    cfg.seq_len = kv_int_required(kv, "seq_len");
    cfg.d_ff = kv_int(kv, "d_ff", 4 * cfg.d_model);
    cfg.validate();
    return cfg;
}

ModelConfig ModelConfig::load(const std::string& path) {
    const auto kv = parse_kv_file(path);
    ModelConfig cfg;
    cfg.n_layers = kv_int_required(kv, "n_layers");
    cfg.d_model = kv_int_required(kv, "d_model");
    cfg.n_heads = kv_int_required(kv, "n_heads");
    cfg.vocab_size = kv_int_required(kv, "vocab_size");
    cfg.seq_len = kv_int_required(kv, "seq_len");
    cfg.d_ff = kv_int(kv, "d_ff", 4 * cfg.d_model);
    cfg.validate();
    return cfg;
}

void ModelConfig::validate() const {
    if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 || vocab_size < 1 || seq_len < 1) {
        throw ConfigError("model config fields must all be >= 1");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("d_model must be divisible by n_heads");
    }
}

ParamStore ParamStore::shaped(const ModelConfig& cfg) {
    const std::int64_t C = cfg.d_model, F = cfg.d_ff;
    ParamStore p;
    p.wte.assign(static_cast<std::size_t>(cfg.vocab_size * C), 0.0f);
    p.wpe.assign(static_cast<std::size_t>(cfg.seq_len * C), 0.0f);
    p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (auto& l : p.layers) {
        l.ln1w.assign(static_cast<std::size_t>(C), 0.0f);
        l.ln1b.assign(static_cast<std::size_t>(C), 0.0f);
        l.qkvw.assign(static_cast<std::size_t>(C * 3 * C), 0.0f);
        l.qkvb.assign(static_cast<std::size_t>(3 * C), 0.0f);
        l.attprojw.assign(static_cast<std::size_t>(C * C), 0.0f);
        l.attprojb.assign(static_cast<std::size_t>(C), 0.0f);
        l.ln2w.assign(static_cast<std::size_t>(C), 0.0f);
        l.ln2b.assign(static_cast<std::size_t>(C), 0.0f);
        l.fcw.assign(static_cast<std::size_t>(C * F), 0.0f);
        l.fcb.assign(static_cast<std::size_t>(F), 0.0f);
        l.fcprojw.assign(static_cast<std::size_t>(F * C), 0.0f);
        l.fcprojb.assign(static_cast<std::size_t>(C), 0.0f);
    }
    p.lnfw.assign(static_cast<std::size_t>(C), 0.0f);
    p.lnfb.assign(static_cast<std::size_t>(C), 0.0f);
    return p;
}

ParamStore ParamStore::init(const ModelConfig& cfg, Rng& rng) {
    ParamStore p = shaped(cfg);
    auto fill_normal = [&](std::vector<float>& v, double std) {
        for (float& x : v) x = static_cast<float>(rng.normal(0.0, std));
    };
    const double proj_std = 0.02 / std::sqrt(2.0 * static_cast<double>(cfg.n_layers));
    fill_normal(p.wte, 0.02);
    fill_normal(p.wpe, 0.01);
    for (auto& l : p.layers) {
        std::fill(l.ln1w.begin(), l.ln1w.end(), 1.0f);
        std::fill(l.ln2w.begin(), l.ln2w.end(), 1.0f);
        fill_normal(l.qkvw, 0.02);
        fill_normal(l.attprojw, proj_std);
        fill_normal(l.fcw, 0.02);
        fill_normal(l.fcprojw, proj_std);
    }
    std::fill(p.lnfw.begin(), p.lnfw.end(), 1.0f);
    return p;
}

std::vector<std::pair<std::string, std::vector<float>*>> ParamStore::entries() {
    std::vector<std::pair<std::string, std::vector<float>*>> out;
    out.emplace_back("wte", &wte);
    out.emplace_back("wpe", &wpe);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string pre = "l" + std::to_string(i) + ".";
        Layer& l = layers[i];
        out.emplace_back(pre + "ln1w", &l.ln1w);
        out.emplace_back(pre + "ln1b", &l.ln1b);
        out.emplace_back(pre + "qkvw", &l.qkvw);
        out.emplace_back(pre + "qkvb", &l.qkvb);
        out.emplace_back(pre + "attprojw", &l.attprojw);
        out.emplace_back(pre + "attprojb", &l.attprojb);
        out.emplace_back(pre + "ln2w", &l.ln2w);
        out.emplace_back(pre + "ln2b", &l.ln2b);
        out.emplace_back(pre + "fcw", &l.fcw);
        out.emplace_back(pre + "fcb", &l.fcb);
        out.emplace_back(pre + "fcprojw", &l.fcprojw);
        out.emplace_back(pre + "fcprojb", &l.fcprojb);
    }
    out.emplace_back("lnfw", &lnfw);
    out.emplace_back("lnfb", &lnfb);
    return out;
}

std::int64_t ParamStore::param_count() const {
    std::int64_t n = static_cast<std::int64_t>(wte.size() + wpe.size() + lnfw.size() + lnfb.size());
    for (const auto& l : layers) {
        n += static_cast<std::int64_t>(l.ln1w.size() + l.ln1b.size() + l.qkvw.size() +
                                       l.qkvb.size() + l.attprojw.size() + l.attprojb.size() +
                                       l.ln2w.size() + l.ln2b.size() + l.fcw.size() +
                                       l.fcb.size() + l.fcprojw.size() + l.fcprojb.size());
    }
    return n;
}

void ParamStore::zero() {
    for (auto& [name, v] : entries()) std::fill(v->begin(), v->end(), 0.0f);
}

Activations Activations::shaped(const ModelConfig& cfg) {
    const std::int64_t T = cfg.seq_len, C = cfg.d_model, F = cfg.d_ff, V = cfg.vocab_size;
    const std::int64_t H = cfg.n_heads;
    Activations a;
    a.encoded.assign(static_cast<std::size_t>(T * C), 0.0f);
    a.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (auto& l : a.layers) {
        l.ln1.assign(static_cast<std::size_t>(T * C), 0.0f);
        l.ln1_mean.assign(static_cast<std::size_t>(T), 0.0f);
        l.ln1_rstd.assign(static_cast<std::size_t>(T), 0.0f);
        l.qkv.assign(static_cast<std::size_t>(T * 3 * C), 0.0f);
        l.preatt.assign(static_cast<std::size_t>(H * T * T), 0.0f);
        l.att.assign(static_cast<std::size_t>(H * T * T), 0.0f);
        l.atty.assign(static_cast<std::size_t>(T * C), 0.0f);
        l.attproj.assign(static_cast<std::size_t>(T * C), 0.0f);
        l.residual2.assign(static_cast<std::size_t>(T * C), 0.0f);
        l.ln2.assign(static_cast<std::size_t>(T * C), 0.0f);
        l.ln2_mean.assign(static_cast<std::size_t>(T), 0.0f);
        l.ln2_rstd.assign(static_cast<std::size_t>(T), 0.0f);
        l.fch.assign(static_cast<std::size_t>(T * F), 0.0f);
        l.fch_gelu.assign(static_cast<std::size_t>(T * F), 0.0f);
        l.fcproj.assign(static_cast<std::size_t>(T * C), 0.0f);
        l.residual3.assign(static_cast<std::size_t>(T * C), 0.0f);
    }
    a.lnf.assign(static_cast<std::size_t>(T * C), 0.0f);
    a.lnf_mean.assign(static_cast<std::size_t>(T), 0.0f);
    a.lnf_rstd.assign(static_cast<std::size_t>(T), 0.0f);
    a.logits.assign(static_cast<std::size_t>(T * V), 0.0f);
    a.probs.assign(static_cast<std::size_t>(T * V), 0.0f);
    a.losses.assign(static_cast<std::size_t>(T), 0.0f);
    return a;
}

namespace {

Matrix wrap(const std::vector<float>& v, std::int64_t rows, std::int64_t cols, Order order) {
    Matrix m = Matrix::zeros(rows, cols, DType::f32, order);
    std::memcpy(m.data.data(), v.data(), v.size() * sizeof(float));
    return m;
}

void add_into(std::vector<float>& dst, const Matrix& src) {
    const float* s = src.f32_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s[i];
}

// out[T,OC] = inp[T,C] . W + b; the weight slab holds the mathematical
// C x OC matrix column-major.
void linear_forward(OffloadContext& ctx, std::vector<float>& out, const std::vector<float>& inp,
                    const std::vector<float>& w, const std::vector<float>* b, std::int64_t T,
                    std::int64_t C, std::int64_t OC) {
    GemmRequest req{wrap(inp, T, C, Order::row_major), wrap(w, C, OC, Order::col_major),
                    false, false};
    const GemmResult r = matmul(ctx, req);
    const float* c = r.c.f32_data();
    for (std::int64_t t = 0; t < T; ++t) {
        for (std::int64_t o = 0; o < OC; ++o) {
            out[static_cast<std::size_t>(t * OC + o)] =
                c[t * OC + o] + (b ? (*b)[static_cast<std::size_t>(o)] : 0.0f);
        }
    }
}

// dinp += dout . W^T, dW += dout^T . inp (in OC x C row-major order, which is
// the slab's own order), db += column sums of dout.
void linear_backward(OffloadContext& ctx, std::vector<float>& dinp, std::vector<float>& dw,
                     std::vector<float>* db, const std::vector<float>& dout,
                     const std::vector<float>& inp, const std::vector<float>& w, std::int64_t T,
                     std::int64_t C, std::int64_t OC) {
    GemmRequest dinp_req{wrap(dout, T, OC, Order::row_major), wrap(w, C, OC, Order::col_major),
                         false, true};
    add_into(dinp, matmul(ctx, dinp_req).c);
    GemmRequest dw_req{wrap(dout, T, OC, Order::row_major), wrap(inp, T, C, Order::row_major),
                       true, false};
    add_into(dw, matmul(ctx, dw_req).c);
    if (db) {
        for (std::int64_t t = 0; t < T; ++t) {
            for (std::int64_t o = 0; o < OC; ++o) {
                (*db)[static_cast<std::size_t>(o)] += dout[static_cast<std::size_t>(t * OC + o)];
            }
        }
    }
}

// logits[T,V] = inp[T,C] . wte^T with wte the V x C row-major embedding table.
void tied_forward(OffloadContext& ctx, std::vector<float>& out, const std::vector<float>& inp,
                  const std::vector<float>& wte, std::int64_t T, std::int64_t C, std::int64_t V) {
    GemmRequest req{wrap(inp, T, C, Order::row_major), wrap(wte, V, C, Order::row_major),
                    false, true};
    const GemmResult r = matmul(ctx, req);
    std::memcpy(out.data(), r.c.f32_data(), out.size() * sizeof(float));
}

void tied_backward(OffloadContext& ctx, std::vector<float>& dinp, std::vector<float>& dwte,
                   const std::vector<float>& dout, const std::vector<float>& inp,
                   const std::vector<float>& wte, std::int64_t T, std::int64_t C, std::int64_t V) {
    GemmRequest dinp_req{wrap(dout, T, V, Order::row_major), wrap(wte, V, C, Order::row_major),
                         false, false};
    add_into(dinp, matmul(ctx, dinp_req).c);
    GemmRequest dwte_req{wrap(dout, T, V, Order::row_major), wrap(inp, T, C, Order::row_major),
                         true, false};
    add_into(dwte, matmul(ctx, dwte_req).c);
}

void layernorm_forward(std::vector<float>& out, std::vector<float>& mean, std::vector<float>& rstd,
                       const std::vector<float>& inp, const std::vector<float>& w,
                       const std::vector<float>& b, std::int64_t T, std::int64_t C) {
    for (std::int64_t t = 0; t < T; ++t) {
        const float* x = inp.data() + t * C;
        float m = 0.0f;
        for (std::int64_t i = 0; i < C; ++i) m += x[i];
        m /= static_cast<float>(C);
        float v = 0.0f;
        for (std::int64_t i = 0; i < C; ++i) {
            const float d = x[i] - m;
            v += d * d;
        }
        v /= static_cast<float>(C);
        const float rs = 1.0f / std::sqrt(v + 1e-5f);
        float* o = out.data() + t * C;
        for (std::int64_t i = 0; i < C; ++i) {
            o[i] = (x[i] - m) * rs * w[static_cast<std::size_t>(i)] +
                   b[static_cast<std::size_t>(i)];
        }
        mean[static_cast<std::size_t>(t)] = m;
        rstd[static_cast<std::size_t>(t)] = rs;
    }
}

void layernorm_backward(std::vector<float>& dinp, std::vector<float>& dw, std::vector<float>& db,
                        const std::vector<float>& dout, const std::vector<float>& inp,
                        const std::vector<float>& w, const std::vector<float>& mean,
                        const std::vector<float>& rstd, std::int64_t T, std::int64_t C) {
    for (std::int64_t t = 0; t < T; ++t) {
        const float* x = inp.data() + t * C;
        const float* g = dout.data() + t * C;
        const float m = mean[static_cast<std::size_t>(t)];
        const float rs = rstd[static_cast<std::size_t>(t)];
        float dnorm_mean = 0.0f;
        float dnorm_norm_mean = 0.0f;
        for (std::int64_t i = 0; i < C; ++i) {
            const float norm = (x[i] - m) * rs;
            const float dnorm = w[static_cast<std::size_t>(i)] * g[i];
            dnorm_mean += dnorm;
            dnorm_norm_mean += dnorm * norm;
        }
        dnorm_mean /= static_cast<float>(C);
        dnorm_norm_mean /= static_cast<float>(C);
        float* dx = dinp.data() + t * C;
        for (std::int64_t i = 0; i < C; ++i) {
            const float norm = (x[i] - m) * rs;
            const float dnorm = w[static_cast<std::size_t>(i)] * g[i];
            dw[static_cast<std::size_t>(i)] += norm * g[i];
            db[static_cast<std::size_t>(i)] += g[i];
            dx[i] += (dnorm - dnorm_mean - norm * dnorm_norm_mean) * rs;
        }
    }
}

// Causal multi-head attention over the packed qkv buffer, plain llm.c style.
void attention_forward(std::vector<float>& atty, std::vector<float>& preatt,
                       std::vector<float>& att, const std::vector<float>& qkv, std::int64_t T,
                       std::int64_t C, std::int64_t H) {
    const std::int64_t hs = C / H;
    const float scale = 1.0f / std::sqrt(static_cast<float>(hs));
    for (std::int64_t h = 0; h < H; ++h) {
        for (std::int64_t t = 0; t < T; ++t) {
            const float* q = qkv.data() + t * 3 * C + h * hs;
            float* pre = preatt.data() + h * T * T + t * T;
            float* a = att.data() + h * T * T + t * T;
            float maxv = -1e30f;
            for (std::int64_t t2 = 0; t2 <= t; ++t2) {
                const float* k = qkv.data() + t2 * 3 * C + C + h * hs;
                float dot = 0.0f;
                for (std::int64_t i = 0; i < hs; ++i) dot += q[i] * k[i];
                dot *= scale;
                pre[t2] = dot;
                if (dot > maxv) maxv = dot;
            }
            float sum = 0.0f;
            for (std::int64_t t2 = 0; t2 <= t; ++t2) {
                const float e = std::exp(pre[t2] - maxv);
                a[t2] = e;
                sum += e;
            }
            const float inv = sum > 0.0f ? 1.0f / sum : 0.0f;
            for (std::int64_t t2 = 0; t2 <= t; ++t2) a[t2] *= inv;
            for (std::int64_t t2 = t + 1; t2 < T; ++t2) a[t2] = 0.0f;
            float* o = atty.data() + t * C + h * hs;
            for (std::int64_t i = 0; i < hs; ++i) o[i] = 0.0f;
            for (std::int64_t t2 = 0; t2 <= t; ++t2) {
                const float* v = qkv.data() + t2 * 3 * C + 2 * C + h * hs;
                for (std::int64_t i = 0; i < hs; ++i) o[i] += a[t2] * v[i];
            }
        }
    }
}

void attention_backward(std::vector<float>& dqkv, std::vector<float>& dpreatt,
                        std::vector<float>& datt, const std::vector<float>& datty,
                        const std::vector<float>& qkv, const std::vector<float>& att,
                        std::int64_t T, std::int64_t C, std::int64_t H) {
    const std::int64_t hs = C / H;
    const float scale = 1.0f / std::sqrt(static_cast<float>(hs));
    for (std::int64_t h = 0; h < H; ++h) {
        for (std::int64_t t = 0; t < T; ++t) {
            const float* a = att.data() + h * T * T + t * T;
            float* da = datt.data() + h * T * T + t * T;
            float* dpre = dpreatt.data() + h * T * T + t * T;
            const float* dy = datty.data() + t * C + h * hs;
            // through the value accumulation
            for (std::int64_t t2 = 0; t2 <= t; ++t2) {
                const float* v = qkv.data() + t2 * 3 * C + 2 * C + h * hs;
                float* dv = dqkv.data() + t2 * 3 * C + 2 * C + h * hs;
                for (std::int64_t i = 0; i < hs; ++i) {
                    da[t2] += v[i] * dy[i];
                    dv[i] += a[t2] * dy[i];
                }
            }
            // through the softmax
            for (std::int64_t t2 = 0; t2 <= t; ++t2) {
                for (std::int64_t t3 = 0; t3 <= t; ++t3) {
                    const float indicator = t2 == t3 ? 1.0f : 0.0f;
                    dpre[t3] += a[t2] * (indicator - a[t3]) * da[t2];
                }
            }
            // through the query-key dot products
            const float* q = qkv.data() + t * 3 * C + h * hs;
            float* dq = dqkv.data() + t * 3 * C + h * hs;
            for (std::int64_t t2 = 0; t2 <= t; ++t2) {
                const float* k = qkv.data() + t2 * 3 * C + C + h * hs;
                float* dk = dqkv.data() + t2 * 3 * C + C + h * hs;
                for (std::int64_t i = 0; i < hs; ++i) {
                    dq[i] += k[i] * dpre[t2] * scale;
                    dk[i] += q[i] * dpre[t2] * scale;
                }
            }
        }
    }
}

float gelu_scale() { return std::sqrt(2.0f / 3.14159265358979323846f); }

void gelu_forward(std::vector<float>& out, const std::vector<float>& inp) {
    const float s = gelu_scale();
    for (std::size_t i = 0; i < inp.size(); ++i) {
        const float x = inp[i];
        const float cube = 0.044715f * x * x * x;
        out[i] = 0.5f * x * (1.0f + std::tanh(s * (x + cube)));
    }
}

void gelu_backward(std::vector<float>& dinp, const std::vector<float>& inp,
                   const std::vector<float>& dout) {
    const float s = gelu_scale();
    for (std::size_t i = 0; i < inp.size(); ++i) {
        const float x = inp[i];
        const float cube = 0.044715f * x * x * x;
        const float arg = s * (x + cube);
        const float th = std::tanh(arg);
        const float sech2 = 1.0f - th * th;
        const float local = 0.5f * (1.0f + th) +
                            x * 0.5f * sech2 * s * (1.0f + 3.0f * 0.044715f * x * x);
        dinp[i] += local * dout[i];
    }
}

void residual_forward(std::vector<float>& out, const std::vector<float>& a,
                      const std::vector<float>& b) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
}

void residual_backward(std::vector<float>& da, std::vector<float>& db,
                       const std::vector<float>& dout) {
    for (std::size_t i = 0; i < dout.size(); ++i) {
        da[i] += dout[i];
        db[i] += dout[i];
    }
}

void softmax_xent_forward(std::vector<float>& probs, std::vector<float>& losses,
                          const std::vector<float>& logits, const std::vector<int>* targets,
                          std::int64_t T, std::int64_t V) {
    for (std::int64_t t = 0; t < T; ++t) {
        const float* lg = logits.data() + t * V;
        float* p = probs.data() + t * V;
        float maxv = -1e30f;
        for (std::int64_t v = 0; v < V; ++v) maxv = std::max(maxv, lg[v]);
        float sum = 0.0f;
        for (std::int64_t v = 0; v < V; ++v) {
            p[v] = std::exp(lg[v] - maxv);
            sum += p[v];
        }
        const float inv = 1.0f / sum;
        for (std::int64_t v = 0; v < V; ++v) p[v] *= inv;
        if (targets) {
            losses[static_cast<std::size_t>(t)] =
                -std::log(std::max(p[(*targets)[static_cast<std::size_t>(t)]], 1e-30f));
        }
    }
}

} // namespace

Gpt2::Gpt2(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    params_ = ParamStore::init(cfg_, rng);
    grads_ = ParamStore::shaped(cfg_);
    acts_ = Activations::shaped(cfg_);
}

float Gpt2::forward(OffloadContext& ctx, const std::vector<int>& tokens,
                    const std::vector<int>* targets) {
    const std::int64_t T = cfg_.seq_len, C = cfg_.d_model, F = cfg_.d_ff, V = cfg_.vocab_size;
    if (static_cast<std::int64_t>(tokens.size()) != T ||
        (targets && static_cast<std::int64_t>(targets->size()) != T)) {
        throw ShapeMismatch("token sequence must have length seq_len");
    }
    auto check_tokens = [&](const std::vector<int>& v) {
        for (int tok : v) {
            if (tok < 0 || tok >= V) {
                throw TokenOutOfRange("token " + std::to_string(tok) + " outside [0, " +
                                      std::to_string(V) + ")");
            }
        }
    };
    check_tokens(tokens);
    if (targets) check_tokens(*targets);

    for (std::int64_t t = 0; t < T; ++t) {
        const std::int64_t tok = tokens[static_cast<std::size_t>(t)];
        for (std::int64_t i = 0; i < C; ++i) {
            acts_.encoded[static_cast<std::size_t>(t * C + i)] =
                params_.wte[static_cast<std::size_t>(tok * C + i)] +
                params_.wpe[static_cast<std::size_t>(t * C + i)];
        }
    }

    const std::vector<float>* residual = &acts_.encoded;
    for (std::int64_t l = 0; l < cfg_.n_layers; ++l) {
        auto& pl = params_.layers[static_cast<std::size_t>(l)];
        auto& al = acts_.layers[static_cast<std::size_t>(l)];
        layernorm_forward(al.ln1, al.ln1_mean, al.ln1_rstd, *residual, pl.ln1w, pl.ln1b, T, C);
        linear_forward(ctx, al.qkv, al.ln1, pl.qkvw, &pl.qkvb, T, C, 3 * C);
        attention_forward(al.atty, al.preatt, al.att, al.qkv, T, C, cfg_.n_heads);
        linear_forward(ctx, al.attproj, al.atty, pl.attprojw, &pl.attprojb, T, C, C);
        residual_forward(al.residual2, *residual, al.attproj);
        layernorm_forward(al.ln2, al.ln2_mean, al.ln2_rstd, al.residual2, pl.ln2w, pl.ln2b, T, C);
        linear_forward(ctx, al.fch, al.ln2, pl.fcw, &pl.fcb, T, C, F);
        gelu_forward(al.fch_gelu, al.fch);
        linear_forward(ctx, al.fcproj, al.fch_gelu, pl.fcprojw, &pl.fcprojb, T, F, C);
        residual_forward(al.residual3, al.residual2, al.fcproj);
        residual = &al.residual3;
    }
    layernorm_forward(acts_.lnf, acts_.lnf_mean, acts_.lnf_rstd, *residual, params_.lnfw,
                      params_.lnfb, T, C);
    tied_forward(ctx, acts_.logits, acts_.lnf, params_.wte, T, C, V);
    softmax_xent_forward(acts_.probs, acts_.losses, acts_.logits, targets, T, V);
    if (!targets) return 0.0f;
    float loss = 0.0f;
    for (float l : acts_.losses) loss += l;
    return loss / static_cast<float>(T);
}

void Gpt2::backward(OffloadContext& ctx, const std::vector<int>& tokens,
                    const std::vector<int>& targets) {
    const std::int64_t T = cfg_.seq_len, C = cfg_.d_model, F = cfg_.d_ff, V = cfg_.vocab_size;
    const std::int64_t H = cfg_.n_heads;
    grads_.zero();
    Activations d = Activations::shaped(cfg_);  // gradient mirror, zeroed

    for (std::int64_t t = 0; t < T; ++t) {
        const float inv_t = 1.0f / static_cast<float>(T);
        float* dl = d.logits.data() + t * V;
        const float* p = acts_.probs.data() + t * V;
        for (std::int64_t v = 0; v < V; ++v) dl[v] = p[v] * inv_t;
        dl[targets[static_cast<std::size_t>(t)]] -= inv_t;
    }

    tied_backward(ctx, d.lnf, grads_.wte, d.logits, acts_.lnf, params_.wte, T, C, V);
    const std::vector<float>& residual_last =
        cfg_.n_layers > 0 ? acts_.layers.back().residual3 : acts_.encoded;
    std::vector<float>& dresidual_last =
        cfg_.n_layers > 0 ? d.layers.back().residual3 : d.encoded;
    layernorm_backward(dresidual_last, grads_.lnfw, grads_.lnfb, d.lnf, residual_last,
                       params_.lnfw, acts_.lnf_mean, acts_.lnf_rstd, T, C);

    for (std::int64_t l = cfg_.n_layers - 1; l >= 0; --l) {
        auto& pl = params_.layers[static_cast<std::size_t>(l)];
        auto& gl = grads_.layers[static_cast<std::size_t>(l)];
        auto& al = acts_.layers[static_cast<std::size_t>(l)];
        auto& dl = d.layers[static_cast<std::size_t>(l)];
        const std::vector<float>& residual =
            l == 0 ? acts_.encoded : acts_.layers[static_cast<std::size_t>(l - 1)].residual3;
        std::vector<float>& dresidual =
            l == 0 ? d.encoded : d.layers[static_cast<std::size_t>(l - 1)].residual3;

        residual_backward(dl.residual2, dl.fcproj, dl.residual3);
        linear_backward(ctx, dl.fch_gelu, gl.fcprojw, &gl.fcprojb, dl.fcproj, al.fch_gelu,
                        pl.fcprojw, T, F, C);
        gelu_backward(dl.fch, al.fch, dl.fch_gelu);
        linear_backward(ctx, dl.ln2, gl.fcw, &gl.fcb, dl.fch, al.ln2, pl.fcw, T, C, F);
        layernorm_backward(dl.residual2, gl.ln2w, gl.ln2b, dl.ln2, al.residual2, pl.ln2w,
                           al.ln2_mean, al.ln2_rstd, T, C);
        residual_backward(dresidual, dl.attproj, dl.residual2);
        linear_backward(ctx, dl.atty, gl.attprojw, &gl.attprojb, dl.attproj, al.atty,
                        pl.attprojw, T, C, C);
        attention_backward(dl.qkv, dl.preatt, dl.att, dl.atty, al.qkv, al.att, T, C, H);
        linear_backward(ctx, dl.ln1, gl.qkvw, &gl.qkvb, dl.qkv, al.ln1, pl.qkvw, T, C, 3 * C);
        layernorm_backward(dresidual, gl.ln1w, gl.ln1b, dl.ln1, residual, pl.ln1w, al.ln1_mean,
                           al.ln1_rstd, T, C);
    }

    for (std::int64_t t = 0; t < T; ++t) {
        const std::int64_t tok = tokens[static_cast<std::size_t>(t)];
        for (std::int64_t i = 0; i < C; ++i) {
            const float g = d.encoded[static_cast<std::size_t>(t * C + i)];
            grads_.wte[static_cast<std::size_t>(tok * C + i)] += g;
            grads_.wpe[static_cast<std::size_t>(t * C + i)] += g;
        }
    }
}

float Gpt2::train_step(OffloadContext& ctx, const std::vector<int>& tokens,
                       const std::vector<int>& targets, float lr, float clip) {
    const float loss = forward(ctx, tokens, &targets);
    backward(ctx, tokens, targets);
    double norm_sq = 0.0;
    for (auto& [name, g] : grads_.entries()) {
        for (float v : *g) norm_sq += static_cast<double>(v) * static_cast<double>(v);
    }
    const double norm = std::sqrt(norm_sq);
    const float scale =
        clip > 0.0f && norm > clip ? static_cast<float>(clip / norm) : 1.0f;
    auto pe = params_.entries();
    auto ge = grads_.entries();
    for (std::size_t i = 0; i < pe.size(); ++i) {
        std::vector<float>& p = *pe[i].second;
        const std::vector<float>& g = *ge[i].second;
        for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * scale * g[j];
    }
    return loss;
}

std::vector<GemmCallSite> gemm_call_sites(const ModelConfig& cfg) {
    const std::int64_t T = cfg.seq_len, C = cfg.d_model, F = cfg.d_ff, V = cfg.vocab_size;
    const std::int64_t L = cfg.n_layers;
    std::vector<GemmCallSite> sites;
    auto fwd = [&](const std::string& name, std::int64_t Cin, std::int64_t OC, std::int64_t n) {
        sites.push_back({name, {T, Cin, OC}, n, false});
        sites.push_back({name + ".dinp", {T, OC, Cin}, n, true});
        sites.push_back({name + ".dweight", {OC, T, Cin}, n, true});
    };
    fwd("qkv", C, 3 * C, L);
    fwd("attproj", C, C, L);
    fwd("fc", C, F, L);
    fwd("fcproj", F, C, L);
    fwd("logits", C, V, 1);
    return sites;
}

std::vector<ProblemSize> extract_gemm_sizes(const ModelConfig& cfg) {
    std::set<ProblemSize> dedup;
    for (const GemmCallSite& s : gemm_call_sites(cfg)) dedup.insert(s.size);
    return {dedup.begin(), dedup.end()};
}

FlopLedger count_flops(const ModelConfig& cfg) {
    const double T = static_cast<double>(cfg.seq_len);
    const double C = static_cast<double>(cfg.d_model);
    const double F = static_cast<double>(cfg.d_ff);
    const double V = static_cast<double>(cfg.vocab_size);
    const double L = static_cast<double>(cfg.n_layers);
    const double H = static_cast<double>(cfg.n_heads);
    FlopLedger ledger;

    for (const GemmCallSite& s : gemm_call_sites(cfg)) {
        const double f = 2.0 * static_cast<double>(s.size.M) * static_cast<double>(s.size.K) *
                         static_cast<double>(s.size.N) * static_cast<double>(s.count);
        if (s.backward) ledger.gemm_backward += f;
        else ledger.gemm_forward += f;
        bool merged = false;
        for (FlopEntry& e : ledger.entries) {
            const std::string base = s.name.substr(0, s.name.find('.'));
            if (e.name == "gemm." + base) {
                if (s.backward) e.backward += f;
                else e.forward += f;
                merged = true;
                break;
            }
        }
        if (!merged) {
            FlopEntry e;
            e.name = "gemm." + s.name.substr(0, s.name.find('.'));
            if (s.backward) e.backward = f;
            else e.forward = f;
            ledger.entries.push_back(e);
        }
    }

    // Two batched T x T matmuls per layer plus the attention softmax.
    ledger.attention_forward = L * (4.0 * T * T * C + 3.0 * T * T * H);
    ledger.attention_backward = 2.0 * ledger.attention_forward;
    ledger.entries.push_back(
        {"attention", ledger.attention_forward, ledger.attention_backward});

    auto other = [&](const std::string& name, double f, double b) {
        ledger.entries.push_back({name, f, b});
        ledger.other_forward += f;
        ledger.other_backward += b;
    };
    other("layernorm", (2.0 * L + 1.0) * 5.0 * T * C, (2.0 * L + 1.0) * 10.0 * T * C);
    other("gelu", L * 8.0 * T * F, L * 16.0 * T * F);
    other("residual", 2.0 * L * T * C, 2.0 * L * T * C);
    other("embedding", T * C, T * C);
    other("softmax_xent", 5.0 * T * V, T * V);
    return ledger;
}

std::string FlopLedger::to_text() const {
    std::ostringstream out;
    out << "op forward_flops backward_flops\n";
    char buf[160];
    for (const FlopEntry& e : entries) {
        std::snprintf(buf, sizeof(buf), "%-16s %18.0f %18.0f\n", e.name.c_str(), e.forward,
                      e.backward);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-16s %18.0f %18.0f\n", "gemm_subtotal", gemm_forward,
                  gemm_backward);
    out << buf;
    std::snprintf(buf, sizeof(buf), "forward_total  = %.3f GFLOP\n", forward_total() / 1e9);
    out << buf;
    std::snprintf(buf, sizeof(buf), "backward_total = %.3f GFLOP\n", backward_total() / 1e9);
    out << buf;
    std::snprintf(buf, sizeof(buf), "step_total     = %.3f GFLOP\n", step_total() / 1e9);
    out << buf;
    return out.str();
}

std::vector<int> synthetic_tokens(const ModelConfig& cfg, std::uint64_t seed,
                                  std::int64_t count) {
    Rng rng(seed);
    const int period = 8;
    std::vector<int> pattern(period);
    for (int& p : pattern) p = static_cast<int>(rng.uniform_int(0, cfg.vocab_size - 1));
    std::vector<int> tokens(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
        tokens[static_cast<std::size_t>(i)] = pattern[static_cast<std::size_t>(i % period)];
    }
    return tokens;
}

std::uint64_t fnv1a_digest(const float* v, std::size_t n) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, &v[i], 4);
        for (int b = 0; b < 4; ++b) {
            h ^= (bits >> (8 * b)) & 0xffu;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

} // namespace npusim

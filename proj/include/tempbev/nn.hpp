#pragma once

#include <map>
#include <string>
#include <vector>

#include "tempbev/autodiff.hpp"
#include "tempbev/rng.hpp"

namespace tempbev::nn {

using ad::Var;

// Named learnable tensors with deterministic iteration order.
class ParamStore {
public:
    Var add(const std::string& name, Tensor init);
    Var get(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    void zero_grads();
    std::int64_t total_scalars() const;

private:
    std::vector<std::pair<std::string, Var>> items_;
    std::map<std::string, std::size_t> index_;
};

// fan-in scaled uniform init (He-style for relu nets)
Tensor kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng);

struct Linear {
    Var w;  // [in, out]
    Var b;  // [1, out]
    static Linear create(ParamStore& ps, const std::string& prefix, int in, int out,
                         Rng& rng);
    Var operator()(const Var& x) const {  // x: [rows, in]
        return ad::add_row_vec(ad::matmul(x, w), b);
    }
};

struct LayerNorm {
    Var gain, bias;
    static LayerNorm create(ParamStore& ps, const std::string& prefix, int width);
    Var operator()(const Var& x) const { return ad::layernorm_rows(x, gain, bias); }
};

// Pre-norm multi-head attention block with feed-forward. Query input width
// dq_in projects to inner/output width dq (head width dq/heads); keys/values
// come in at width dkv. The query residual applies only when dq_in == dq.
struct AttentionBlock {
    int heads = 1;
    int dq_in = 0, dq = 0;
    LayerNorm ln_q, ln_kv, ln_ff;
    Var wq, wk, wv;  // [dq_in, dq], [dkv, dq], [dkv, dq]
    Var wo, bo;      // [dq, dq], [1, dq]
    Linear ff1, ff2;
    bool residual_q = true;
    bool with_ff = true;

    static AttentionBlock create(ParamStore& ps, const std::string& prefix, int dq_in,
                                 int dq, int dkv, int heads, Rng& rng,
                                 bool residual_q = true, bool with_ff = true);
    Var operator()(const Var& q, const Var& kv) const;
};

// stride-preserving residual conv block: two 3x3 convs
struct ResidualConvBlock {
    Var w1, b1, w2, b2;
    int width = 0;
    static ResidualConvBlock create(ParamStore& ps, const std::string& prefix, int width,
                                    Rng& rng);
    Var operator()(const Var& x) const;  // x: [width, H, W]
};

struct Conv {
    Var w, b;
    int kh = 3, kw = 3, stride = 1, pad = 1;
    static Conv create(ParamStore& ps, const std::string& prefix, int cin, int cout,
                       int k, int stride, int pad, Rng& rng);
    Var operator()(const Var& x) const { return ad::conv2d(x, w, b, kh, kw, stride, pad); }
};

class AdamOptimizer {
public:
    AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8, double clip_norm = 1.0)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), clip_norm_(clip_norm) {}

    void step(ParamStore& params);

private:
    double lr_, beta1_, beta2_, eps_, clip_norm_;
    int t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

double global_grad_norm(const ParamStore& params);

}  // namespace tempbev::nn

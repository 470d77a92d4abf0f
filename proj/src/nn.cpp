#include "tempbev/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace tempbev::nn {

Var ParamStore::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate param: " + name);
    Var v = ad::leaf(std::move(init));
    index_[name] = items_.size();
    items_.emplace_back(name, v);
    return v;
}

Var ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no param: " + name);
    return items_[it->second].second;
}

void ParamStore::zero_grads() {
    for (auto& [name, v] : items_) v->grad = Tensor();
}

std::int64_t ParamStore::total_scalars() const {
    std::int64_t n = 0;
    for (const auto& [name, v] : items_) n += v->val.numel();
    return n;
}

Tensor kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / std::max(1, fan_in));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

Linear Linear::create(ParamStore& ps, const std::string& prefix, int in, int out,
                      Rng& rng) {
    Linear l;
    l.w = ps.add(prefix + ".w", kaiming_uniform({in, out}, in, rng));
    l.b = ps.add(prefix + ".b", Tensor({1, out}));
    return l;
}

LayerNorm LayerNorm::create(ParamStore& ps, const std::string& prefix, int width) {
    LayerNorm ln;
    ln.gain = ps.add(prefix + ".gain", Tensor({1, width}, 1.0));
    ln.bias = ps.add(prefix + ".bias", Tensor({1, width}));
    return ln;
}

AttentionBlock AttentionBlock::create(ParamStore& ps, const std::string& prefix,
                                      int dq_in, int dq, int dkv, int heads, Rng& rng,
                                      bool residual_q, bool with_ff) {
    if (dq % heads != 0)
        throw std::invalid_argument(prefix + ": query width not divisible by heads");
    AttentionBlock b;
    b.heads = heads;
    b.dq_in = dq_in;
    b.dq = dq;
    b.residual_q = residual_q && dq_in == dq;
    b.with_ff = with_ff;
    b.ln_q = LayerNorm::create(ps, prefix + ".ln_q", dq_in);
    b.ln_kv = LayerNorm::create(ps, prefix + ".ln_kv", dkv);
    if (with_ff) b.ln_ff = LayerNorm::create(ps, prefix + ".ln_ff", dq);
    b.wq = ps.add(prefix + ".wq", kaiming_uniform({dq_in, dq}, dq_in, rng));
    b.wk = ps.add(prefix + ".wk", kaiming_uniform({dkv, dq}, dkv, rng));
    b.wv = ps.add(prefix + ".wv", kaiming_uniform({dkv, dq}, dkv, rng));
    b.wo = ps.add(prefix + ".wo", kaiming_uniform({dq, dq}, dq, rng));
    b.bo = ps.add(prefix + ".bo", Tensor({1, dq}));
    if (with_ff) {
        b.ff1 = Linear::create(ps, prefix + ".ff1", dq, 2 * dq, rng);
        b.ff2 = Linear::create(ps, prefix + ".ff2", 2 * dq, dq, rng);
    }
    return b;
}

Var AttentionBlock::operator()(const Var& q_in, const Var& kv_in) const {
    const int dh = dq / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Var qn = ln_q(q_in);
    Var kvn = ln_kv(kv_in);
    Var q = ad::matmul(qn, wq);
    Var k = ad::matmul(kvn, wk);
    Var v = ad::matmul(kvn, wv);
    std::vector<Var> head_outs;
    head_outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        Var qh = ad::slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = ad::slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = ad::slice_cols(v, h * dh, (h + 1) * dh);
        Var scores = ad::scale(ad::matmul(qh, kh, false, true), inv_sqrt);
        Var attn = ad::softmax_rows(scores);
        head_outs.push_back(ad::matmul(attn, vh));
    }
    Var merged = head_outs[0];
    for (std::size_t h = 1; h < head_outs.size(); ++h)
        merged = ad::concat_cols(merged, head_outs[h]);
    Var out = ad::add_row_vec(ad::matmul(merged, wo), bo);
    Var x = residual_q ? ad::add(q_in, out) : out;
    if (!with_ff) return x;
    Var y = ff2(ad::relu(ff1(ln_ff(x))));
    return ad::add(x, y);
}

ResidualConvBlock ResidualConvBlock::create(ParamStore& ps, const std::string& prefix,
                                            int width, Rng& rng) {
    ResidualConvBlock b;
    b.width = width;
    b.w1 = ps.add(prefix + ".w1", kaiming_uniform({width, width * 9}, width * 9, rng));
    b.b1 = ps.add(prefix + ".b1", Tensor({1, width}));
    b.w2 = ps.add(prefix + ".w2", kaiming_uniform({width, width * 9}, width * 9, rng));
    b.b2 = ps.add(prefix + ".b2", Tensor({1, width}));
    return b;
}

Var ResidualConvBlock::operator()(const Var& x) const {
    Var h = ad::relu(ad::conv2d(x, w1, b1, 3, 3, 1, 1));
    Var y = ad::conv2d(h, w2, b2, 3, 3, 1, 1);
    return ad::relu(ad::add(x, y));
}

Conv Conv::create(ParamStore& ps, const std::string& prefix, int cin, int cout, int k,
                  int stride, int pad, Rng& rng) {
    Conv c;
    c.kh = c.kw = k;
    c.stride = stride;
    c.pad = pad;
    c.w = ps.add(prefix + ".w", kaiming_uniform({cout, cin * k * k}, cin * k * k, rng));
    c.b = ps.add(prefix + ".b", Tensor({1, cout}));
    return c;
}

double global_grad_norm(const ParamStore& params) {
    double sq = 0.0;
    for (const auto& [name, v] : params.items()) {
        if (v->grad.numel() == 0) continue;
        for (std::int64_t i = 0; i < v->grad.numel(); ++i) sq += v->grad[i] * v->grad[i];
    }
    return std::sqrt(sq);
}

void AdamOptimizer::step(ParamStore& params) {
    ++t_;
    double scale = 1.0;
    if (clip_norm_ > 0.0) {
        const double norm = global_grad_norm(params);
        if (norm > clip_norm_) scale = clip_norm_ / norm;
    }
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& [name, v] : params.items()) {
        if (v->grad.numel() == 0) continue;
        Tensor& m = m_.try_emplace(name, Tensor::zeros(v->val.shape())).first->second;
        Tensor& vv = v_.try_emplace(name, Tensor::zeros(v->val.shape())).first->second;
        for (std::int64_t i = 0; i < v->val.numel(); ++i) {
            const double g = v->grad[i] * scale;
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            vv[i] = beta2_ * vv[i] + (1.0 - beta2_) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = vv[i] / bc2;
            v->val[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace tempbev::nn

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "tempbev/tensor.hpp"

namespace tempbev::ad {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor val;
    Tensor grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;  // accumulates into parents' grads
    int visit_mark = 0;

    Tensor& ensure_grad() {
        if (grad.numel() == 0) grad = Tensor::zeros(val.shape());
        return grad;
    }
};

// Graph recording is on by default; NoGradGuard turns it off so inference
// passes neither retain parents nor allocate backward closures.
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

Var constant(Tensor t);
Var leaf(Tensor t);  // requires_grad = true

void backward(const Var& loss);

// ---- primitive ops ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
// c = op(A, B) treating both as 2D; transpose flags apply to the logical operand
Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false);
Var add_row_vec(const Var& a, const Var& bias);  // bias shape [1, cols]
Var relu(const Var& a);
Var gelu(const Var& a);
Var tanh_op(const Var& a);
Var cos_op(const Var& a);
Var softmax_rows(const Var& a);
Var layernorm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var concat_cols(const Var& a, const Var& b);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, int r0, int r1);
Var slice_cols(const Var& a, int c0, int c1);
Var reshape(const Var& a, std::vector<int> shape);
Var transpose2d(const Var& a);  // [r,c] -> [c,r]
Var sum_all(const Var& a);
Var mean_all(const Var& a);

// x: [Cin, H, W]; w: [Cout, Cin*kh*kw]; bias: [1, Cout] (or nullptr)
Var conv2d(const Var& x, const Var& w, const Var& bias, int kh, int kw, int stride,
           int pad);
Var upsample2_nearest(const Var& x);        // [C,H,W] -> [C,2H,2W]
Var channel_mean(const Var& x);             // [C,H,W] -> [1,C]

// Per-pillar max over point rows. feats: [D, c]; pillar_of[d] in [0, n_pillars)
// or -1 for out-of-bounds points. Output [n_pillars, c]; empty pillars zero.
Var pillar_max(const Var& feats, const std::vector<int>& pillar_of, int n_pillars);

// mean over cells of weighted BCE; logits/targets same shape, targets in {0,1}
Var bce_with_logits(const Var& logits, const Tensor& targets, double pos_weight);

}  // namespace tempbev::ad

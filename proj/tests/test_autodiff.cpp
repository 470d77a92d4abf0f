#include <cmath>
#include <functional>

#include "doctest.h"
#include "tempbev/autodiff.hpp"
#include "tempbev/nn.hpp"
#include "tempbev/rng.hpp"

using namespace tempbev;
using ad::Var;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1, double hi = 1) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// max relative error between backward gradients and central finite differences
double fd_max_rel_error(const std::function<Var()>& build_loss,
                        const std::vector<Var>& leaves, double eps = 1e-6) {
    for (const Var& l : leaves) l->grad = Tensor();
    const Var loss = build_loss();
    REQUIRE(loss->val.numel() == 1);
    ad::backward(loss);
    double worst = 0;
    for (const Var& leaf : leaves) {
        REQUIRE(leaf->grad.numel() == leaf->val.numel());
        for (std::int64_t i = 0; i < leaf->val.numel(); ++i) {
            const double keep = leaf->val[i];
            leaf->val[i] = keep + eps;
            const double up = build_loss()->val[0];
            leaf->val[i] = keep - eps;
            const double dn = build_loss()->val[0];
            leaf->val[i] = keep;
            const double fd = (up - dn) / (2 * eps);
            const double an = leaf->grad[i];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
            worst = std::max(worst, std::abs(fd - an) / denom);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("matmul value against a hand computation") {
    Tensor a({2, 3}), b({3, 2});
    for (int i = 0; i < 6; ++i) {
        a[i] = i + 1;      // [[1,2,3],[4,5,6]]
        b[i] = 6 - i;      // [[6,5],[4,3],[2,1]]
    }
    const Var c = ad::matmul(ad::constant(a), ad::constant(b));
    CHECK(c->val.at2(0, 0) == doctest::Approx(1 * 6 + 2 * 4 + 3 * 2));
    CHECK(c->val.at2(0, 1) == doctest::Approx(1 * 5 + 2 * 3 + 3 * 1));
    CHECK(c->val.at2(1, 0) == doctest::Approx(4 * 6 + 5 * 4 + 6 * 2));
    CHECK(c->val.at2(1, 1) == doctest::Approx(4 * 5 + 5 * 3 + 6 * 1));
}

TEST_CASE("matmul transpose flags agree with explicit transposition") {
    Rng rng(1);
    const Tensor a = random_tensor({4, 3}, rng), b = random_tensor({4, 5}, rng);
    const Var va = ad::constant(a), vb = ad::constant(b);
    const Var direct = ad::matmul(va, vb, true, false);
    const Var via = ad::matmul(ad::transpose2d(va), vb);
    CHECK(max_abs_diff(direct->val, via->val) < 1e-12);
    const Var vb2 = ad::constant(random_tensor({5, 3}, rng));
    const Var direct2 = ad::matmul(va, vb2, false, true);
    const Var via2 = ad::matmul(va, ad::transpose2d(vb2));
    CHECK(max_abs_diff(direct2->val, via2->val) < 1e-12);
}

TEST_CASE("softmax rows: each row sums to one and shifts cancel") {
    Rng rng(2);
    const Tensor x = random_tensor({3, 5}, rng, -4, 4);
    Tensor shifted = x;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 5; ++c) shifted.at2(r, c) += 7.0;
    const Var s1 = ad::softmax_rows(ad::constant(x));
    const Var s2 = ad::softmax_rows(ad::constant(shifted));
    for (int r = 0; r < 3; ++r) {
        double sum = 0;
        for (int c = 0; c < 5; ++c) sum += s1->val.at2(r, c);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(max_abs_diff(s1->val, s2->val) < 1e-12);
}

TEST_CASE("layernorm rows normalizes mean and variance") {
    Rng rng(3);
    const Tensor x = random_tensor({2, 8}, rng, -3, 3);
    const Var gain = ad::constant(Tensor({1, 8}, 1.0));
    const Var bias = ad::constant(Tensor::zeros({1, 8}));
    const Var y = ad::layernorm_rows(ad::constant(x), gain, bias);
    for (int r = 0; r < 2; ++r) {
        double mean = 0, var = 0;
        for (int c = 0; c < 8; ++c) mean += y->val.at2(r, c);
        mean /= 8;
        for (int c = 0; c < 8; ++c) var += (y->val.at2(r, c) - mean) * (y->val.at2(r, c) - mean);
        var /= 8;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("gradients match central finite differences: dense ops") {
    Rng rng(4);
    const Var a = ad::leaf(random_tensor({3, 4}, rng));
    const Var b = ad::leaf(random_tensor({4, 5}, rng));
    const Var bias = ad::leaf(random_tensor({1, 5}, rng));

    SUBCASE("matmul + bias + tanh") {
        const auto build = [&] {
            return ad::mean_all(ad::tanh_op(ad::add_row_vec(ad::matmul(a, b), bias)));
        };
        CHECK(fd_max_rel_error(build, {a, b, bias}) < 1e-5);
    }
    SUBCASE("gelu and cos") {
        const auto build = [&] { return ad::sum_all(ad::cos_op(ad::gelu(a))); };
        CHECK(fd_max_rel_error(build, {a}) < 1e-5);
    }
    SUBCASE("softmax + elementwise mul") {
        const Var w = ad::leaf(random_tensor({3, 4}, rng));
        const auto build = [&] { return ad::sum_all(ad::mul(ad::softmax_rows(a), w)); };
        CHECK(fd_max_rel_error(build, {a, w}) < 1e-5);
    }
    SUBCASE("layernorm") {
        const Var g = ad::leaf(random_tensor({1, 4}, rng, 0.5, 1.5));
        const Var be = ad::leaf(random_tensor({1, 4}, rng));
        const auto build = [&] {
            return ad::mean_all(ad::layernorm_rows(a, g, be));
        };
        CHECK(fd_max_rel_error(build, {a, g, be}) < 1e-4);
    }
    SUBCASE("concat, slice, transpose, reshape") {
        const auto build = [&] {
            const Var cat = ad::concat_cols(a, ad::transpose2d(ad::slice_rows(b, 0, 4)));
            const Var sl = ad::slice_cols(cat, 1, 7);
            return ad::mean_all(ad::reshape(sl, {2, 9}));
        };
        CHECK(fd_max_rel_error(build, {a, b}) < 1e-5);
    }
}

TEST_CASE("gradients match central finite differences: conv stack") {
    Rng rng(5);
    const Var x = ad::leaf(random_tensor({2, 5, 6}, rng));
    const Var w = ad::leaf(random_tensor({3, 2 * 3 * 3}, rng, -0.5, 0.5));
    const Var bias = ad::leaf(random_tensor({1, 3}, rng));
    SUBCASE("stride 1, pad 1") {
        const auto build = [&] {
            return ad::mean_all(ad::tanh_op(ad::conv2d(x, w, bias, 3, 3, 1, 1)));
        };
        CHECK(fd_max_rel_error(build, {x, w, bias}) < 1e-5);
    }
    SUBCASE("stride 2 with upsample and channel mean") {
        const Var x2 = ad::leaf(random_tensor({2, 6, 6}, rng));
        const auto build = [&] {
            const Var y = ad::conv2d(x2, w, bias, 3, 3, 2, 1);
            return ad::mean_all(ad::channel_mean(ad::upsample2_nearest(y)));
        };
        CHECK(fd_max_rel_error(build, {x2, w, bias}) < 1e-5);
    }
    SUBCASE("1x1 conv") {
        const Var w1 = ad::leaf(random_tensor({4, 2}, rng));
        const Var b1 = ad::leaf(random_tensor({1, 4}, rng));
        const auto build = [&] {
            return ad::mean_all(ad::conv2d(x, w1, b1, 1, 1, 1, 0));
        };
        CHECK(fd_max_rel_error(build, {x, w1, b1}) < 1e-5);
    }
}

TEST_CASE("gradients match central finite differences: pillar max and bce") {
    Rng rng(6);
    const Var feats = ad::leaf(random_tensor({7, 3}, rng));
    const std::vector<int> pillar_of = {0, 2, 2, -1, 1, 0, 2};
    SUBCASE("pillar max routes gradient to the arg max rows") {
        const Var w = ad::leaf(random_tensor({4, 3}, rng));
        const auto build = [&] {
            return ad::sum_all(ad::mul(ad::pillar_max(feats, pillar_of, 4), w));
        };
        CHECK(fd_max_rel_error(build, {feats, w}) < 1e-5);
    }
    SUBCASE("weighted bce with logits") {
        Tensor targets({7, 3});
        for (int i = 0; i < 21; ++i) targets[i] = (i % 3 == 0) ? 1.0 : 0.0;
        const auto build = [&] { return ad::bce_with_logits(feats, targets, 3.5); };
        CHECK(fd_max_rel_error(build, {feats}) < 1e-5);
    }
}

TEST_CASE("gradients flow through an attention block") {
    Rng rng(7);
    nn::ParamStore ps;
    const nn::AttentionBlock blk = nn::AttentionBlock::create(ps, "t", 6, 6, 4, 2, rng);
    const Var q = ad::leaf(random_tensor({3, 6}, rng));
    const Var kv = ad::leaf(random_tensor({5, 4}, rng));
    std::vector<Var> leaves = {q, kv};
    for (const auto& [name, v] : ps.items()) leaves.push_back(v);
    const auto build = [&] { return ad::mean_all(blk(q, kv)); };
    CHECK(fd_max_rel_error(build, leaves) < 1e-4);
}

TEST_CASE("backward accumulates when a node feeds two consumers") {
    const Var x = ad::leaf(Tensor({1, 1}, 1.0));
    const Var y = ad::add(ad::mul(x, x), ad::scale(x, 3.0));  // x^2 + 3x, d/dx = 2x+3
    ad::backward(ad::sum_all(y));
    CHECK(x->grad[0] == doctest::Approx(5.0));
}

TEST_CASE("NoGradGuard disables graph recording") {
    const Var x = ad::leaf(Tensor({2, 2}, 1.0));
    {
        ad::NoGradGuard ng;
        const Var y = ad::mul(x, x);
        CHECK(y->parents.empty());
        CHECK_FALSE(y->requires_grad);
    }
    const Var y = ad::mul(x, x);
    CHECK(y->parents.size() == 2);
}

TEST_CASE("bce_with_logits closed forms") {
    // all-zero logits, pos_weight 1 -> ln 2 regardless of targets
    Tensor targets({2, 2});
    targets[0] = 1;
    targets[3] = 1;
    const Var zero = ad::constant(Tensor::zeros({2, 2}));
    CHECK(ad::bce_with_logits(zero, targets, 1.0)->val[0] ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // saturated logits toward the target drive the loss to zero monotonically
    auto loss_at = [&](double mag) {
        Tensor l({2, 2});
        for (int i = 0; i < 4; ++i) l[i] = targets[i] > 0 ? mag : -mag;
        return ad::bce_with_logits(ad::constant(l), targets, 1.0)->val[0];
    };
    CHECK(loss_at(10) < loss_at(1));
    CHECK(loss_at(10) < 1e-4);
}

TEST_CASE("adam with clipping reduces a quadratic") {
    nn::ParamStore ps;
    Rng rng(8);
    const Var w = ps.add("w", random_tensor({4, 1}, rng, 2, 3));
    nn::AdamOptimizer opt(0.05, 0.9, 0.999, 1e-8, 1.0);
    double first = 0, last = 0;
    for (int step = 0; step < 200; ++step) {
        ps.zero_grads();
        const Var loss = ad::sum_all(ad::mul(w, w));
        if (step == 0) first = loss->val[0];
        last = loss->val[0];
        ad::backward(loss);
        CHECK(nn::global_grad_norm(ps) >= 0);
        opt.step(ps);
    }
    CHECK(last < first * 0.01);
}

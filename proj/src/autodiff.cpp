#include "tempbev/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tempbev {

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    assert(a.numel() == b.numel());
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool all_finite(const Tensor& t) {
    for (std::int64_t i = 0; i < t.numel(); ++i)
        if (!std::isfinite(t[i])) return false;
    return true;
}

}  // namespace tempbev

namespace tempbev::ad {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

static Map as_mat(Tensor& t) { return Map(t.data(), t.rows(), t.cols()); }

static thread_local bool g_grad_enabled = true;

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    return n;
}

Var leaf(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    n->requires_grad = true;
    return n;
}

static bool track(std::initializer_list<const Var*> ins) {
    if (!g_grad_enabled) return false;
    for (const Var* v : ins)
        if ((*v)->requires_grad) return true;
    return false;
}

// Makes the result node; wires parents + backprop only when tracking.
template <typename F>
static Var make(Tensor val, std::initializer_list<const Var*> ins, F&& bp) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    if (track(ins)) {
        n->requires_grad = true;
        for (const Var* v : ins) n->parents.push_back(*v);
        n->backprop = std::forward<F>(bp);
    }
    return n;
}

void backward(const Var& loss) {
    if (loss->val.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar");
    // topo order by iterative DFS
    std::vector<Node*> order;
    std::vector<std::pair<Node*, std::size_t>> stack;
    std::vector<Node*> marked;
    stack.push_back({loss.get(), 0});
    loss->visit_mark = 1;
    marked.push_back(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->visit_mark == 0 && p->requires_grad) {
                p->visit_mark = 1;
                marked.push_back(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->ensure_grad()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->grad.numel() > 0) n->backprop(*n);
    }
    for (Node* n : marked) n->visit_mark = 0;
}

Var add(const Var& a, const Var& b) {
    assert(a->val.numel() == b->val.numel());
    Tensor out = a->val;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b->val[i];
    return make(std::move(out), {&a, &b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            Node& p = *n.parents[k];
            if (!p.requires_grad) continue;
            Tensor& g = p.ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    assert(a->val.numel() == b->val.numel());
    Tensor out = a->val;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b->val[i];
    return make(std::move(out), {&a, &b}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    assert(a->val.numel() == b->val.numel());
    Tensor out = a->val;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b->val[i];
    return make(std::move(out), {&a, &b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            Tensor& g = pa.ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * pb.val[i];
        }
        if (pb.requires_grad) {
            Tensor& g = pb.ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * pa.val[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a->val;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return make(std::move(out), {&a}, [s](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += s * n.grad[i];
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a->val;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += s;
    return make(std::move(out), {&a}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    });
}

Var matmul(const Var& a, const Var& b, bool trans_a, bool trans_b) {
    const int ar = trans_a ? a->val.cols() : a->val.rows();
    const int ac = trans_a ? a->val.rows() : a->val.cols();
    const int br = trans_b ? b->val.cols() : b->val.rows();
    const int bc = trans_b ? b->val.rows() : b->val.cols();
    if (ac != br)
        throw std::invalid_argument("matmul: inner dims " + std::to_string(ac) + " vs " +
                                    std::to_string(br));
    Tensor out = Tensor::uninit({ar, bc});
    {
        auto A = as_mat(a->val);
        auto B = as_mat(b->val);
        auto C = as_mat(out);
        if (!trans_a && !trans_b) C.noalias() = A * B;
        else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
        else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
        else C.noalias() = A.transpose() * B.transpose();
    }
    return make(std::move(out), {&a, &b}, [trans_a, trans_b](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        auto G = as_mat(n.grad);
        if (pa.requires_grad) {
            auto Ag = as_mat(pa.ensure_grad());
            auto B = as_mat(pb.val);
            if (!trans_a && !trans_b) Ag.noalias() += G * B.transpose();
            else if (trans_a && !trans_b) Ag.noalias() += B * G.transpose();
            else if (!trans_a && trans_b) Ag.noalias() += G * B;
            else Ag.noalias() += B.transpose() * G.transpose();
        }
        if (pb.requires_grad) {
            auto Bg = as_mat(pb.ensure_grad());
            auto A = as_mat(pa.val);
            if (!trans_a && !trans_b) Bg.noalias() += A.transpose() * G;
            else if (trans_a && !trans_b) Bg.noalias() += A * G;
            else if (!trans_a && trans_b) Bg.noalias() += G.transpose() * A;
            else Bg.noalias() += G.transpose() * A.transpose();
        }
    });
}

Var add_row_vec(const Var& a, const Var& bias) {
    assert(bias->val.numel() == a->val.cols());
    Tensor out = a->val;
    const int r = out.rows(), c = out.cols();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at2(i, j) += bias->val[j];
    return make(std::move(out), {&a, &bias}, [](Node& n) {
        const int r = n.val.rows(), c = n.val.cols();
        if (n.parents[0]->requires_grad) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) g[j] += n.grad.at2(i, j);
        }
    });
}

Var relu(const Var& a) {
    Tensor out = a->val;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(0.0, out[i]);
    return make(std::move(out), {&a}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i)
            if (n.parents[0]->val[i] > 0.0) g[i] += n.grad[i];
    });
}

static const double kInvSqrt2 = 0.7071067811865476;
static const double kInvSqrt2Pi = 0.3989422804014327;

Var gelu(const Var& a) {
    Tensor out = a->val;
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        const double x = out[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    return make(std::move(out), {&a}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            const double x = n.parents[0]->val[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            g[i] += n.grad[i] * (cdf + x * pdf);
        }
    });
}

Var tanh_op(const Var& a) {
    Tensor out = a->val;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
    return make(std::move(out), {&a}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            const double y = n.val[i];
            g[i] += n.grad[i] * (1.0 - y * y);
        }
    });
}

Var cos_op(const Var& a) {
    Tensor out = a->val;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::cos(out[i]);
    return make(std::move(out), {&a}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i)
            g[i] += -n.grad[i] * std::sin(n.parents[0]->val[i]);
    });
}

Var softmax_rows(const Var& a) {
    Tensor out = a->val;
    const int r = out.rows(), c = out.cols();
    for (int i = 0; i < r; ++i) {
        double m = -1e300;
        for (int j = 0; j < c; ++j) m = std::max(m, out.at2(i, j));
        double s = 0.0;
        for (int j = 0; j < c; ++j) {
            double e = std::exp(out.at2(i, j) - m);
            out.at2(i, j) = e;
            s += e;
        }
        const double inv = 1.0 / s;
        for (int j = 0; j < c; ++j) out.at2(i, j) *= inv;
    }
    return make(std::move(out), {&a}, [](Node& n) {
        const int r = n.val.rows(), c = n.val.cols();
        Tensor& g = n.parents[0]->ensure_grad();
        for (int i = 0; i < r; ++i) {
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += n.grad.at2(i, j) * n.val.at2(i, j);
            for (int j = 0; j < c; ++j)
                g.at2(i, j) += n.val.at2(i, j) * (n.grad.at2(i, j) - dot);
        }
    });
}

Var layernorm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
    const int r = x->val.rows(), c = x->val.cols();
    assert(gain->val.numel() == c && bias->val.numel() == c);
    Tensor out = Tensor::uninit({r, c});
    Tensor xhat = Tensor::uninit({r, c});
    Tensor inv_std = Tensor::uninit({r});
    for (int i = 0; i < r; ++i) {
        double mu = 0.0;
        for (int j = 0; j < c; ++j) mu += x->val.at2(i, j);
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            const double d = x->val.at2(i, j) - mu;
            var += d * d;
        }
        var /= c;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int j = 0; j < c; ++j) {
            const double h = (x->val.at2(i, j) - mu) * is;
            xhat.at2(i, j) = h;
            out.at2(i, j) = h * gain->val[j] + bias->val[j];
        }
    }
    return make(std::move(out), {&x, &gain, &bias},
                [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
        const int r = n.val.rows(), c = n.val.cols();
        Node& px = *n.parents[0];
        Node& pg = *n.parents[1];
        Node& pb = *n.parents[2];
        if (pg.requires_grad) {
            Tensor& g = pg.ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) g[j] += n.grad.at2(i, j) * xhat.at2(i, j);
        }
        if (pb.requires_grad) {
            Tensor& g = pb.ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) g[j] += n.grad.at2(i, j);
        }
        if (px.requires_grad) {
            Tensor& g = px.ensure_grad();
            for (int i = 0; i < r; ++i) {
                double m1 = 0.0, m2 = 0.0;
                for (int j = 0; j < c; ++j) {
                    const double dh = n.grad.at2(i, j) * pg.val[j];
                    m1 += dh;
                    m2 += dh * xhat.at2(i, j);
                }
                m1 /= c;
                m2 /= c;
                for (int j = 0; j < c; ++j) {
                    const double dh = n.grad.at2(i, j) * pg.val[j];
                    g.at2(i, j) += (dh - m1 - xhat.at2(i, j) * m2) * inv_std[i];
                }
            }
        }
    });
}

Var concat_cols(const Var& a, const Var& b) {
    const int r = a->val.rows();
    assert(b->val.rows() == r);
    const int ca = a->val.cols(), cb = b->val.cols();
    Tensor out = Tensor::uninit({r, ca + cb});
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < ca; ++j) out.at2(i, j) = a->val.at2(i, j);
        for (int j = 0; j < cb; ++j) out.at2(i, ca + j) = b->val.at2(i, j);
    }
    return make(std::move(out), {&a, &b}, [ca, cb](Node& n) {
        const int r = n.val.rows();
        if (n.parents[0]->requires_grad) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < ca; ++j) g.at2(i, j) += n.grad.at2(i, j);
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < cb; ++j) g.at2(i, j) += n.grad.at2(i, ca + j);
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    assert(!parts.empty());
    const int c = parts[0]->val.cols();
    int r = 0;
    for (const auto& p : parts) {
        assert(p->val.cols() == c);
        r += p->val.rows();
    }
    Tensor out = Tensor::uninit({r, c});
    int off = 0;
    for (const auto& p : parts) {
        std::copy(p->val.data(), p->val.data() + p->val.numel(), out.data() + off);
        off += static_cast<int>(p->val.numel());
    }
    bool need = false;
    if (g_grad_enabled)
        for (const auto& p : parts)
            if (p->requires_grad) need = true;
    auto n = std::make_shared<Node>();
    n->val = std::move(out);
    if (need) {
        n->requires_grad = true;
        n->parents = parts;
        n->backprop = [](Node& nn) {
            std::int64_t off2 = 0;
            for (auto& p : nn.parents) {
                const std::int64_t m = p->val.numel();
                if (p->requires_grad) {
                    Tensor& g = p->ensure_grad();
                    for (std::int64_t i = 0; i < m; ++i) g[i] += nn.grad[off2 + i];
                }
                off2 += m;
            }
        };
    }
    return n;
}

Var slice_rows(const Var& a, int r0, int r1) {
    const int c = a->val.cols();
    assert(0 <= r0 && r0 <= r1 && r1 <= a->val.rows());
    Tensor out = Tensor::uninit({r1 - r0, c});
    std::copy(a->val.data() + static_cast<std::int64_t>(r0) * c,
              a->val.data() + static_cast<std::int64_t>(r1) * c, out.data());
    return make(std::move(out), {&a}, [r0, c](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
            g[static_cast<std::int64_t>(r0) * c + i] += n.grad[i];
    });
}

Var slice_cols(const Var& a, int c0, int c1) {
    const int r = a->val.rows();
    assert(0 <= c0 && c0 <= c1 && c1 <= a->val.cols());
    Tensor out = Tensor::uninit({r, c1 - c0});
    for (int i = 0; i < r; ++i)
        for (int j = c0; j < c1; ++j) out.at2(i, j - c0) = a->val.at2(i, j);
    return make(std::move(out), {&a, }, [c0](Node& n) {
        const int r = n.val.rows(), cw = n.val.cols();
        Tensor& g = n.parents[0]->ensure_grad();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < cw; ++j) g.at2(i, c0 + j) += n.grad.at2(i, j);
    });
}

Var reshape(const Var& a, std::vector<int> shape) {
    Tensor out = a->val.reshaped(std::move(shape));
    return make(std::move(out), {&a}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    });
}

Var transpose2d(const Var& a) {
    const int r = a->val.rows(), c = a->val.cols();
    Tensor out = Tensor::uninit({c, r});
    as_mat(out) = as_mat(a->val).transpose();
    return make(std::move(out), {&a}, [](Node& n) {
        Map g(n.parents[0]->ensure_grad().data(), n.val.cols(), n.val.rows());
        g += CMap(n.grad.data(), n.val.rows(), n.val.cols()).transpose();
    });
}

Var sum_all(const Var& a) {
    double s = 0.0;
    for (std::int64_t i = 0; i < a->val.numel(); ++i) s += a->val[i];
    return make(Tensor::scalar(s), {&a}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[0];
    });
}

Var mean_all(const Var& a) {
    const double inv = 1.0 / static_cast<double>(a->val.numel());
    double s = 0.0;
    for (std::int64_t i = 0; i < a->val.numel(); ++i) s += a->val[i];
    return make(Tensor::scalar(s * inv), {&a}, [inv](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[0] * inv;
    });
}

static void im2col(const Tensor& x, int kh, int kw, int stride, int pad, Tensor& cols,
                   int hout, int wout) {
    const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    double* cp = cols.data();
    for (int ci = 0; ci < cin; ++ci) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const double* xp = x.data() + static_cast<std::int64_t>(ci) * h * w;
                for (int oi = 0; oi < hout; ++oi) {
                    const int ii = oi * stride - pad + ki;
                    for (int oj = 0; oj < wout; ++oj) {
                        const int jj = oj * stride - pad + kj;
                        *cp++ = (ii >= 0 && ii < h && jj >= 0 && jj < w)
                                    ? xp[static_cast<std::int64_t>(ii) * w + jj]
                                    : 0.0;
                    }
                }
            }
        }
    }
}

static void col2im_add(const Tensor& cols, int cin, int h, int w, int kh, int kw,
                       int stride, int pad, Tensor& gx, int hout, int wout) {
    const double* cp = cols.data();
    for (int ci = 0; ci < cin; ++ci) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                double* xp = gx.data() + static_cast<std::int64_t>(ci) * h * w;
                for (int oi = 0; oi < hout; ++oi) {
                    const int ii = oi * stride - pad + ki;
                    for (int oj = 0; oj < wout; ++oj) {
                        const int jj = oj * stride - pad + kj;
                        if (ii >= 0 && ii < h && jj >= 0 && jj < w)
                            xp[static_cast<std::int64_t>(ii) * w + jj] += *cp;
                        ++cp;
                    }
                }
            }
        }
    }
}

Var conv2d(const Var& x, const Var& w, const Var& bias, int kh, int kw, int stride,
           int pad) {
    assert(x->val.ndim() == 3);
    const int cin = x->val.dim(0), h = x->val.dim(1), wd = x->val.dim(2);
    const int cout = w->val.rows();
    assert(w->val.cols() == cin * kh * kw);
    const int hout = (h + 2 * pad - kh) / stride + 1;
    const int wout = (wd + 2 * pad - kw) / stride + 1;
    Tensor cols = Tensor::uninit({cin * kh * kw, hout * wout});
    im2col(x->val, kh, kw, stride, pad, cols, hout, wout);
    Tensor out = Tensor::uninit({cout, hout, wout});
    {
        CMap W(w->val.data(), cout, cin * kh * kw);
        CMap C(cols.data(), cin * kh * kw, hout * wout);
        Map O(out.data(), cout, hout * wout);
        O.noalias() = W * C;
        if (bias)
            for (int co = 0; co < cout; ++co)
                O.row(co).array() += bias->val[co];
    }
    if (!track({&x, &w, &bias})) {
        auto n = std::make_shared<Node>();
        n->val = std::move(out);
        return n;
    }
    auto n = std::make_shared<Node>();
    n->val = std::move(out);
    n->requires_grad = true;
    n->parents = {x, w, bias};
    n->backprop = [cols = std::move(cols), kh, kw, stride, pad, cin, h, wd, hout,
                   wout](Node& nn) {
        const int cout = nn.val.dim(0);
        Node& px = *nn.parents[0];
        Node& pw = *nn.parents[1];
        Node& pb = *nn.parents[2];
        CMap G(nn.grad.data(), cout, hout * wout);
        if (pw.requires_grad) {
            Map Wg(pw.ensure_grad().data(), cout, cin * kh * kw);
            CMap C(cols.data(), cin * kh * kw, hout * wout);
            Wg.noalias() += G * C.transpose();
        }
        if (pb.requires_grad) {
            Tensor& g = pb.ensure_grad();
            for (int co = 0; co < cout; ++co) g[co] += G.row(co).sum();
        }
        if (px.requires_grad) {
            Tensor gcols = Tensor::uninit({cin * kh * kw, hout * wout});
            CMap W(pw.val.data(), cout, cin * kh * kw);
            Map GC(gcols.data(), cin * kh * kw, hout * wout);
            GC.noalias() = W.transpose() * G;
            col2im_add(gcols, cin, h, wd, kh, kw, stride, pad, px.ensure_grad(), hout,
                       wout);
        }
    };
    return n;
}

Var upsample2_nearest(const Var& x) {
    assert(x->val.ndim() == 3);
    const int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
    Tensor out = Tensor::uninit({c, 2 * h, 2 * w});
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < 2 * h; ++i)
            for (int j = 0; j < 2 * w; ++j)
                out[(static_cast<std::int64_t>(ci) * 2 * h + i) * 2 * w + j] =
                    x->val[(static_cast<std::int64_t>(ci) * h + i / 2) * w + j / 2];
    return make(std::move(out), {&x}, [c, h, w](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < 2 * h; ++i)
                for (int j = 0; j < 2 * w; ++j)
                    g[(static_cast<std::int64_t>(ci) * h + i / 2) * w + j / 2] +=
                        n.grad[(static_cast<std::int64_t>(ci) * 2 * h + i) * 2 * w + j];
    });
}

Var channel_mean(const Var& x) {
    assert(x->val.ndim() == 3);
    const int c = x->val.dim(0);
    const std::int64_t hw = x->val.dim(1) * static_cast<std::int64_t>(x->val.dim(2));
    Tensor out({1, c});
    for (int ci = 0; ci < c; ++ci) {
        double s = 0.0;
        const double* p = x->val.data() + ci * hw;
        for (std::int64_t i = 0; i < hw; ++i) s += p[i];
        out[ci] = s / static_cast<double>(hw);
    }
    return make(std::move(out), {&x}, [c, hw](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        const double inv = 1.0 / static_cast<double>(hw);
        for (int ci = 0; ci < c; ++ci) {
            double* p = g.data() + ci * hw;
            const double gv = n.grad[ci] * inv;
            for (std::int64_t i = 0; i < hw; ++i) p[i] += gv;
        }
    });
}

Var pillar_max(const Var& feats, const std::vector<int>& pillar_of, int n_pillars) {
    const int d = feats->val.rows(), c = feats->val.cols();
    assert(static_cast<int>(pillar_of.size()) == d);
    Tensor out({n_pillars, c});
    std::vector<std::int32_t> argmax(static_cast<std::size_t>(n_pillars) * c, -1);
    for (int i = 0; i < d; ++i) {
        const int p = pillar_of[i];
        if (p < 0) continue;
        for (int j = 0; j < c; ++j) {
            const double v = feats->val.at2(i, j);
            auto& am = argmax[static_cast<std::size_t>(p) * c + j];
            if (am < 0 || v > out.at2(p, j)) {
                out.at2(p, j) = v;
                am = i;
            }
        }
    }
    return make(std::move(out), {&feats}, [argmax = std::move(argmax), c](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        const int np = n.val.rows();
        for (int p = 0; p < np; ++p)
            for (int j = 0; j < c; ++j) {
                const std::int32_t i = argmax[static_cast<std::size_t>(p) * c + j];
                if (i >= 0) g.at2(i, j) += n.grad.at2(p, j);
            }
    });
}

static double softplus(double z) {
    // log(1 + e^z), overflow-safe
    return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

Var bce_with_logits(const Var& logits, const Tensor& targets, double pos_weight) {
    assert(logits->val.numel() == targets.numel());
    const std::int64_t m = logits->val.numel();
    double loss = 0.0;
    for (std::int64_t i = 0; i < m; ++i) {
        const double z = logits->val[i];
        const double t = targets[i];
        loss += pos_weight * t * softplus(-z) + (1.0 - t) * softplus(z);
    }
    loss /= static_cast<double>(m);
    return make(Tensor::scalar(loss), {&logits}, [targets, pos_weight](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        const std::int64_t m = g.numel();
        const double inv = n.grad[0] / static_cast<double>(m);
        for (std::int64_t i = 0; i < m; ++i) {
            const double z = n.parents[0]->val[i];
            const double s = 1.0 / (1.0 + std::exp(-z));
            const double t = targets[i];
            g[i] += inv * (pos_weight * t * (s - 1.0) + (1.0 - t) * s);
        }
    });
}

}  // namespace tempbev::ad

#include "fswap/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace fswap::ag {

namespace {

std::atomic<std::uint64_t> g_seq{1};

using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
    bool req = false;
    for (const auto& p : parents) req = req || p->requires_grad;
    n->requires_grad = req;
    n->parents = std::move(parents);
    if (req) n->backprop = std::move(backprop);
    return n;
}

void acc(const NodePtr& p, const Eigen::ArrayXd& g) {
    if (p->requires_grad) p->ensure_grad().array() += g;
}

}  // namespace

Var::Var(Tensor v, bool requires_grad) {
    node_ = std::make_shared<Node>();
    node_->value = std::move(v);
    node_->requires_grad = requires_grad;
    node_->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
}

const Tensor& Var::grad() const {
    if (!node_ || !node_->has_grad) throw NumericError("Var::grad: no gradient accumulated");
    return node_->grad;
}

Tensor& Var::grad_mut() {
    if (!node_ || !node_->has_grad) throw NumericError("Var::grad_mut: no gradient accumulated");
    return node_->grad;
}

Var constant(Tensor v) { return Var(std::move(v), false); }

double scalar(const Var& v) {
    if (v.shape().count() != 1) throw ShapeError("ag::scalar: tensor is not a scalar " + v.shape().str());
    return v.value()[0];
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "ag::add");
    return Var::wrap(make_node(Tensor(a.shape(), a.value().array() + b.value().array()), {a.node(), b.node()},
                               [](Node& n) {
                                   acc(n.parents[0], n.grad.array());
                                   acc(n.parents[1], n.grad.array());
                               }));
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "ag::sub");
    return Var::wrap(make_node(Tensor(a.shape(), a.value().array() - b.value().array()), {a.node(), b.node()},
                               [](Node& n) {
                                   acc(n.parents[0], n.grad.array());
                                   acc(n.parents[1], (-n.grad.array()).eval());
                               }));
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "ag::mul");
    return Var::wrap(make_node(Tensor(a.shape(), a.value().array() * b.value().array()), {a.node(), b.node()},
                               [](Node& n) {
                                   acc(n.parents[0], (n.grad.array() * n.parents[1]->value.array()).eval());
                                   acc(n.parents[1], (n.grad.array() * n.parents[0]->value.array()).eval());
                               }));
}

Var div(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "ag::div");
    return Var::wrap(make_node(
        Tensor(a.shape(), a.value().array() / b.value().array()), {a.node(), b.node()}, [](Node& n) {
            const auto& bv = n.parents[1]->value.array();
            acc(n.parents[0], (n.grad.array() / bv).eval());
            acc(n.parents[1], (-n.grad.array() * n.parents[0]->value.array() / (bv * bv)).eval());
        }));
}

Var scale(const Var& a, double k) {
    return Var::wrap(make_node(Tensor(a.shape(), a.value().array() * k), {a.node()},
                               [k](Node& n) { acc(n.parents[0], (n.grad.array() * k).eval()); }));
}

Var add_scalar(const Var& a, double k) {
    return Var::wrap(make_node(Tensor(a.shape(), a.value().array() + k), {a.node()},
                               [](Node& n) { acc(n.parents[0], n.grad.array()); }));
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var silu(const Var& a) {
    Eigen::ArrayXd s = 1.0 / (1.0 + (-a.value().array()).exp());
    return Var::wrap(make_node(Tensor(a.shape(), a.value().array() * s), {a.node()}, [s](Node& n) {
        const auto& x = n.parents[0]->value.array();
        acc(n.parents[0], (n.grad.array() * (s * (1.0 + x * (1.0 - s)))).eval());
    }));
}

Var sigmoid(const Var& a) {
    Eigen::ArrayXd s = 1.0 / (1.0 + (-a.value().array()).exp());
    return Var::wrap(make_node(Tensor(a.shape(), s), {a.node()}, [](Node& n) {
        const auto& y = n.value.array();
        acc(n.parents[0], (n.grad.array() * y * (1.0 - y)).eval());
    }));
}

Var tanh_(const Var& a) {
    return Var::wrap(make_node(Tensor(a.shape(), a.value().array().tanh()), {a.node()}, [](Node& n) {
        const auto& y = n.value.array();
        acc(n.parents[0], (n.grad.array() * (1.0 - y * y)).eval());
    }));
}

Var exp_(const Var& a) {
    return Var::wrap(make_node(Tensor(a.shape(), a.value().array().exp()), {a.node()}, [](Node& n) {
        acc(n.parents[0], (n.grad.array() * n.value.array()).eval());
    }));
}

Var log_(const Var& a) {
    return Var::wrap(make_node(Tensor(a.shape(), a.value().array().log()), {a.node()}, [](Node& n) {
        acc(n.parents[0], (n.grad.array() / n.parents[0]->value.array()).eval());
    }));
}

Var sqrt_(const Var& a) {
    return Var::wrap(make_node(Tensor(a.shape(), a.value().array().sqrt()), {a.node()}, [](Node& n) {
        acc(n.parents[0], (n.grad.array() * 0.5 / n.value.array()).eval());
    }));
}

Var recip(const Var& a) {
    return Var::wrap(make_node(Tensor(a.shape(), a.value().array().inverse()), {a.node()}, [](Node& n) {
        const auto& y = n.value.array();
        acc(n.parents[0], (-n.grad.array() * y * y).eval());
    }));
}

Var mul_const(const Var& a, const Tensor& m) {
    require_same_shape(a.value(), m, "ag::mul_const");
    Eigen::ArrayXd mv = m.array();
    return Var::wrap(make_node(Tensor(a.shape(), a.value().array() * mv), {a.node()},
                               [mv](Node& n) { acc(n.parents[0], (n.grad.array() * mv).eval()); }));
}

Var add_const(const Var& a, const Tensor& m) {
    require_same_shape(a.value(), m, "ag::add_const");
    return Var::wrap(make_node(Tensor(a.shape(), a.value().array() + m.array()), {a.node()},
                               [](Node& n) { acc(n.parents[0], n.grad.array()); }));
}

// ------------------------------------------------------------------ structure

Var reshape(const Var& a, Shape s) {
    if (s.count() != a.shape().count())
        throw ShapeError("ag::reshape: count mismatch " + a.shape().str() + " -> " + s.str());
    return Var::wrap(make_node(Tensor(s, a.value().array()), {a.node()},
                               [](Node& n) { acc(n.parents[0], n.grad.array()); }));
}

Var transpose(const Var& a) {
    if (a.shape().w != 1) throw ShapeError("ag::transpose: expects (m,n,1), got " + a.shape().str());
    int m = a.shape().c, k = a.shape().h;
    Tensor out(k, m, 1);
    out.mat(k, m) = a.value().mat(m, k).transpose();
    return Var::wrap(make_node(std::move(out), {a.node()}, [m, k](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        n.parents[0]->ensure_grad().mat(m, k) += n.grad.mat(k, m).transpose();
    }));
}

Var concat_c(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("ag::concat_c: empty input");
    int h = xs[0].shape().h, w = xs[0].shape().w, ctot = 0;
    for (const auto& x : xs) {
        if (x.shape().h != h || x.shape().w != w)
            throw ShapeError("ag::concat_c: spatial mismatch " + x.shape().str());
        ctot += x.shape().c;
    }
    Tensor out(ctot, h, w);
    std::vector<NodePtr> parents;
    std::int64_t off = 0;
    for (const auto& x : xs) {
        std::int64_t len = x.shape().count();
        out.array().segment(off, len) = x.value().array();
        off += len;
        parents.push_back(x.node());
    }
    return Var::wrap(make_node(std::move(out), std::move(parents), [](Node& n) {
        std::int64_t o = 0;
        for (auto& p : n.parents) {
            std::int64_t len = p->value.shape().count();
            if (p->requires_grad) p->ensure_grad().array() += n.grad.array().segment(o, len);
            o += len;
        }
    }));
}

Var slice_c(const Var& a, int c0, int len) {
    const Shape s = a.shape();
    if (c0 < 0 || len < 1 || c0 + len > s.c) throw ShapeError("ag::slice_c: bad range");
    std::int64_t per = static_cast<std::int64_t>(s.h) * s.w;
    Tensor out(Shape{len, s.h, s.w}, a.value().array().segment(c0 * per, len * per));
    return Var::wrap(make_node(std::move(out), {a.node()}, [c0, per, len](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        n.parents[0]->ensure_grad().array().segment(c0 * per, len * per) += n.grad.array();
    }));
}

Var pick(const Var& a, std::int64_t index) {
    if (index < 0 || index >= a.shape().count()) throw RangeError("ag::pick: index out of range");
    Tensor out(1, 1, 1);
    out[0] = a.value()[index];
    return Var::wrap(make_node(std::move(out), {a.node()}, [index](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        n.parents[0]->ensure_grad()[index] += n.grad[0];
    }));
}

// -------------------------------------------------------------- linear algebra

Var matmul(const Var& a, const Var& b) {
    if (a.shape().w != 1 || b.shape().w != 1 || a.shape().h != b.shape().c)
        throw ShapeError("ag::matmul: " + a.shape().str() + " x " + b.shape().str());
    int m = a.shape().c, k = a.shape().h, n = b.shape().h;
    Tensor out(m, n, 1);
    out.mat(m, n).noalias() = a.value().mat(m, k) * b.value().mat(k, n);
    return Var::wrap(make_node(std::move(out), {a.node(), b.node()}, [m, k, n](Node& nd) {
        auto g = nd.grad.mat(m, n);
        if (nd.parents[0]->requires_grad)
            nd.parents[0]->ensure_grad().mat(m, k).noalias() += g * nd.parents[1]->value.mat(k, n).transpose();
        if (nd.parents[1]->requires_grad)
            nd.parents[1]->ensure_grad().mat(k, n).noalias() += nd.parents[0]->value.mat(m, k).transpose() * g;
    }));
}

// ------------------------------------------------------------------- broadcast

Var add_bias_c(const Var& x, const Var& b) {
    const Shape s = x.shape();
    if (b.shape().c != s.c || b.shape().h != 1 || b.shape().w != 1)
        throw ShapeError("ag::add_bias_c: bias " + b.shape().str() + " vs x " + s.str());
    Tensor out = x.value();
    std::int64_t per = static_cast<std::int64_t>(s.h) * s.w;
    for (int ch = 0; ch < s.c; ++ch) out.array().segment(ch * per, per) += b.value()[ch];
    return Var::wrap(make_node(std::move(out), {x.node(), b.node()}, [s, per](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().array() += n.grad.array();
        if (n.parents[1]->requires_grad) {
            auto& gb = n.parents[1]->ensure_grad();
            for (int ch = 0; ch < s.c; ++ch) gb[ch] += n.grad.array().segment(ch * per, per).sum();
        }
    }));
}

Var mul_bias_c(const Var& x, const Var& v) {
    const Shape s = x.shape();
    if (v.shape().c != s.c || v.shape().h != 1 || v.shape().w != 1)
        throw ShapeError("ag::mul_bias_c: scale " + v.shape().str() + " vs x " + s.str());
    Tensor out = x.value();
    std::int64_t per = static_cast<std::int64_t>(s.h) * s.w;
    for (int ch = 0; ch < s.c; ++ch) out.array().segment(ch * per, per) *= v.value()[ch];
    return Var::wrap(make_node(std::move(out), {x.node(), v.node()}, [s, per](Node& n) {
        const auto& xv = n.parents[0]->value.array();
        const auto& vv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            auto& gx = n.parents[0]->ensure_grad();
            for (int ch = 0; ch < s.c; ++ch)
                gx.array().segment(ch * per, per) += n.grad.array().segment(ch * per, per) * vv[ch];
        }
        if (n.parents[1]->requires_grad) {
            auto& gv = n.parents[1]->ensure_grad();
            for (int ch = 0; ch < s.c; ++ch)
                gv[ch] += (n.grad.array().segment(ch * per, per) * xv.segment(ch * per, per)).sum();
        }
    }));
}

Var mul_bcast_hw(const Var& x, const Var& m) {
    const Shape s = x.shape();
    if (m.shape().c != 1 || m.shape().h != s.h || m.shape().w != s.w)
        throw ShapeError("ag::mul_bcast_hw: map " + m.shape().str() + " vs x " + s.str());
    std::int64_t per = static_cast<std::int64_t>(s.h) * s.w;
    Tensor out(s);
    for (int ch = 0; ch < s.c; ++ch)
        out.array().segment(ch * per, per) = x.value().array().segment(ch * per, per) * m.value().array();
    return Var::wrap(make_node(std::move(out), {x.node(), m.node()}, [s, per](Node& n) {
        const auto& mv = n.parents[1]->value.array();
        const auto& xv = n.parents[0]->value.array();
        if (n.parents[0]->requires_grad) {
            auto& gx = n.parents[0]->ensure_grad();
            for (int ch = 0; ch < s.c; ++ch)
                gx.array().segment(ch * per, per) += n.grad.array().segment(ch * per, per) * mv;
        }
        if (n.parents[1]->requires_grad) {
            auto& gm = n.parents[1]->ensure_grad();
            for (int ch = 0; ch < s.c; ++ch)
                gm.array() += n.grad.array().segment(ch * per, per) * xv.segment(ch * per, per);
        }
    }));
}

Var mul_by(const Var& x, const Var& s) {
    if (s.shape().count() != 1) throw ShapeError("ag::mul_by: scale must be scalar");
    double sv = s.value()[0];
    return Var::wrap(make_node(Tensor(x.shape(), x.value().array() * sv), {x.node(), s.node()}, [sv](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().array() += n.grad.array() * sv;
        if (n.parents[1]->requires_grad)
            n.parents[1]->ensure_grad()[0] += (n.grad.array() * n.parents[0]->value.array()).sum();
    }));
}

Var reduce_c_sum(const Var& x) {
    const Shape s = x.shape();
    std::int64_t per = static_cast<std::int64_t>(s.h) * s.w;
    Tensor out(1, s.h, s.w);
    for (int ch = 0; ch < s.c; ++ch) out.array() += x.value().array().segment(ch * per, per);
    return Var::wrap(make_node(std::move(out), {x.node()}, [s, per](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& gx = n.parents[0]->ensure_grad();
        for (int ch = 0; ch < s.c; ++ch) gx.array().segment(ch * per, per) += n.grad.array();
    }));
}

Var spatial_mean(const Var& x) {
    const Shape s = x.shape();
    std::int64_t per = static_cast<std::int64_t>(s.h) * s.w;
    Tensor out(s.c, 1, 1);
    for (int ch = 0; ch < s.c; ++ch) out[ch] = x.value().array().segment(ch * per, per).mean();
    return Var::wrap(make_node(std::move(out), {x.node()}, [s, per](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& gx = n.parents[0]->ensure_grad();
        double inv = 1.0 / static_cast<double>(per);
        for (int ch = 0; ch < s.c; ++ch) gx.array().segment(ch * per, per) += n.grad[ch] * inv;
    }));
}

// ------------------------------------------------------------------ reductions

Var sum(const Var& a) {
    Tensor out(1, 1, 1);
    out[0] = a.value().array().sum();
    return Var::wrap(make_node(std::move(out), {a.node()}, [](Node& n) {
        acc(n.parents[0], Eigen::ArrayXd::Constant(n.parents[0]->value.size(), n.grad[0]));
    }));
}

Var mean(const Var& a) {
    Tensor out(1, 1, 1);
    out[0] = a.value().array().mean();
    return Var::wrap(make_node(std::move(out), {a.node()}, [](Node& n) {
        double g = n.grad[0] / static_cast<double>(n.parents[0]->value.size());
        acc(n.parents[0], Eigen::ArrayXd::Constant(n.parents[0]->value.size(), g));
    }));
}

Var dot(const Var& a, const Var& b) {
    if (a.shape().count() != b.shape().count()) throw ShapeError("ag::dot: size mismatch");
    Tensor out(1, 1, 1);
    out[0] = (a.value().array() * b.value().array()).sum();
    return Var::wrap(make_node(std::move(out), {a.node(), b.node()}, [](Node& n) {
        acc(n.parents[0], (n.grad[0] * n.parents[1]->value.array()).eval());
        acc(n.parents[1], (n.grad[0] * n.parents[0]->value.array()).eval());
    }));
}

// --------------------------------------------------------------------- spatial

namespace {

// col(r, i): r = (ci*k + ky)*k + kx, i = y*w_out + x
void im2col(const Tensor& x, int k, int pad, MatRM& col, int& out_h, int& out_w) {
    int cin = x.c(), h = x.h(), w = x.w();
    out_h = h + 2 * pad - k + 1;
    out_w = w + 2 * pad - k + 1;
    if (out_h < 1 || out_w < 1) throw ShapeError("conv2d: kernel larger than padded input");
    col.resize(static_cast<Eigen::Index>(cin) * k * k, static_cast<Eigen::Index>(out_h) * out_w);
    col.setZero();
    for (int ci = 0; ci < cin; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                Eigen::Index row = (static_cast<Eigen::Index>(ci) * k + ky) * k + kx;
                for (int y = 0; y < out_h; ++y) {
                    int sy = y + ky - pad;
                    if (sy < 0 || sy >= h) continue;
                    for (int xo = 0; xo < out_w; ++xo) {
                        int sx = xo + kx - pad;
                        if (sx < 0 || sx >= w) continue;
                        col(row, static_cast<Eigen::Index>(y) * out_w + xo) = x.at(ci, sy, sx);
                    }
                }
            }
        }
    }
}

void col2im_acc(const MatRM& dcol, int cin, int h, int w, int k, int pad, int out_h, int out_w, Tensor& dx) {
    for (int ci = 0; ci < cin; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                Eigen::Index row = (static_cast<Eigen::Index>(ci) * k + ky) * k + kx;
                for (int y = 0; y < out_h; ++y) {
                    int sy = y + ky - pad;
                    if (sy < 0 || sy >= h) continue;
                    for (int xo = 0; xo < out_w; ++xo) {
                        int sx = xo + kx - pad;
                        if (sx < 0 || sx >= w) continue;
                        dx.at(ci, sy, sx) += dcol(row, static_cast<Eigen::Index>(y) * out_w + xo);
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int ksize, int pad) {
    const Shape xs = x.shape();
    int cin = xs.c;
    int cout = w.shape().c;
    if (w.shape().h != cin * ksize * ksize || w.shape().w != 1)
        throw ShapeError("ag::conv2d: weight " + w.shape().str() + " vs cin=" + std::to_string(cin) +
                         " k=" + std::to_string(ksize));
    if (b.shape().c != cout || b.shape().h != 1 || b.shape().w != 1) throw ShapeError("ag::conv2d: bad bias shape");

    auto col = std::make_shared<MatRM>();
    int out_h = 0, out_w = 0;
    im2col(x.value(), ksize, pad, *col, out_h, out_w);

    Tensor out(cout, out_h, out_w);
    Eigen::Index npix = static_cast<Eigen::Index>(out_h) * out_w;
    out.mat(cout, static_cast<int>(npix)).noalias() = w.value().mat(cout, cin * ksize * ksize) * (*col);
    std::int64_t per = npix;
    for (int co = 0; co < cout; ++co) out.array().segment(co * per, per) += b.value()[co];

    int h = xs.h, wd = xs.w;
    return Var::wrap(make_node(
        std::move(out), {x.node(), w.node(), b.node()},
        [col, cin, cout, ksize, pad, h, wd, out_h, out_w](Node& n) {
            Eigen::Index np = static_cast<Eigen::Index>(out_h) * out_w;
            auto g = n.grad.mat(cout, static_cast<int>(np));
            if (n.parents[1]->requires_grad)
                n.parents[1]->ensure_grad().mat(cout, cin * ksize * ksize).noalias() += g * col->transpose();
            if (n.parents[2]->requires_grad) {
                auto& gb = n.parents[2]->ensure_grad();
                for (int co = 0; co < cout; ++co) gb[co] += g.row(co).sum();
            }
            if (n.parents[0]->requires_grad) {
                MatRM dcol = n.parents[1]->value.mat(cout, cin * ksize * ksize).transpose() * g;
                col2im_acc(dcol, cin, h, wd, ksize, pad, out_h, out_w, n.parents[0]->ensure_grad());
            }
        }));
}

Var avg_pool2(const Var& x) {
    const Shape s = x.shape();
    if (s.h % 2 || s.w % 2) throw ShapeError("ag::avg_pool2: odd spatial size " + s.str());
    int oh = s.h / 2, ow = s.w / 2;
    Tensor out(s.c, oh, ow);
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < oh; ++y)
            for (int xo = 0; xo < ow; ++xo)
                out.at(c, y, xo) = 0.25 * (x.value().at(c, 2 * y, 2 * xo) + x.value().at(c, 2 * y, 2 * xo + 1) +
                                           x.value().at(c, 2 * y + 1, 2 * xo) + x.value().at(c, 2 * y + 1, 2 * xo + 1));
    return Var::wrap(make_node(std::move(out), {x.node()}, [s, oh, ow](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& gx = n.parents[0]->ensure_grad();
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < oh; ++y)
                for (int xo = 0; xo < ow; ++xo) {
                    double g = 0.25 * n.grad.at(c, y, xo);
                    gx.at(c, 2 * y, 2 * xo) += g;
                    gx.at(c, 2 * y, 2 * xo + 1) += g;
                    gx.at(c, 2 * y + 1, 2 * xo) += g;
                    gx.at(c, 2 * y + 1, 2 * xo + 1) += g;
                }
    }));
}

Var upsample2(const Var& x) {
    const Shape s = x.shape();
    Tensor out(s.c, s.h * 2, s.w * 2);
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h * 2; ++y)
            for (int xo = 0; xo < s.w * 2; ++xo) out.at(c, y, xo) = x.value().at(c, y / 2, xo / 2);
    return Var::wrap(make_node(std::move(out), {x.node()}, [s](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& gx = n.parents[0]->ensure_grad();
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h * 2; ++y)
                for (int xo = 0; xo < s.w * 2; ++xo) gx.at(c, y / 2, xo / 2) += n.grad.at(c, y, xo);
    }));
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
    const Shape s = x.shape();
    if (groups < 1 || s.c % groups != 0)
        throw ShapeError("ag::group_norm: groups=" + std::to_string(groups) + " does not divide c=" +
                         std::to_string(s.c));
    if (gamma.shape().c != s.c || beta.shape().c != s.c) throw ShapeError("ag::group_norm: affine shape mismatch");
    int gc = s.c / groups;
    std::int64_t per = static_cast<std::int64_t>(s.h) * s.w;
    std::int64_t m = gc * per;

    auto xhat = std::make_shared<Eigen::ArrayXd>(x.value().array());
    auto inv_std = std::make_shared<Eigen::ArrayXd>(groups);
    for (int g = 0; g < groups; ++g) {
        auto seg = xhat->segment(g * m, m);
        double mu = seg.mean();
        double var = (seg - mu).square().mean();
        double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[g] = inv;
        seg = (seg - mu) * inv;
    }
    Tensor out(s);
    for (int ch = 0; ch < s.c; ++ch)
        out.array().segment(ch * per, per) = xhat->segment(ch * per, per) * gamma.value()[ch] + beta.value()[ch];

    return Var::wrap(make_node(std::move(out), {x.node(), gamma.node(), beta.node()},
                               [xhat, inv_std, s, gc, per, m, groups](Node& n) {
        const auto& gam = n.parents[1]->value;
        if (n.parents[1]->requires_grad) {
            auto& gg = n.parents[1]->ensure_grad();
            for (int ch = 0; ch < s.c; ++ch)
                gg[ch] += (n.grad.array().segment(ch * per, per) * xhat->segment(ch * per, per)).sum();
        }
        if (n.parents[2]->requires_grad) {
            auto& gb = n.parents[2]->ensure_grad();
            for (int ch = 0; ch < s.c; ++ch) gb[ch] += n.grad.array().segment(ch * per, per).sum();
        }
        if (n.parents[0]->requires_grad) {
            auto& gx = n.parents[0]->ensure_grad();
            Eigen::ArrayXd dxhat(m);
            for (int g = 0; g < groups; ++g) {
                for (int j = 0; j < gc; ++j) {
                    int ch = g * gc + j;
                    dxhat.segment(j * per, per) = n.grad.array().segment(ch * per, per) * gam[ch];
                }
                auto xh = xhat->segment(g * m, m);
                double mean_d = dxhat.mean();
                double mean_dx = (dxhat * xh).mean();
                gx.array().segment(g * m, m) += (*inv_std)[g] * (dxhat - mean_d - xh * mean_dx);
            }
        }
    }));
}

Var softmax_cols(const Var& x) {
    if (x.shape().w != 1) throw ShapeError("ag::softmax_cols: expects (r,c,1)");
    int r = x.shape().c, c = x.shape().h;
    Tensor out(r, c, 1);
    auto xm = x.value().mat(r, c);
    auto ym = out.mat(r, c);
    for (int j = 0; j < c; ++j) {
        Eigen::VectorXd col = xm.col(j);
        double mx = col.maxCoeff();
        Eigen::VectorXd e = (col.array() - mx).exp();
        ym.col(j) = e / e.sum();
    }
    return Var::wrap(make_node(std::move(out), {x.node()}, [r, c](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto y = n.value.mat(r, c);
        auto g = n.grad.mat(r, c);
        auto gx = n.parents[0]->ensure_grad().mat(r, c);
        for (int j = 0; j < c; ++j) {
            double s = y.col(j).dot(g.col(j));
            gx.col(j) += y.col(j).cwiseProduct(g.col(j).array().matrix() - Eigen::VectorXd::Constant(r, s));
        }
    }));
}

// ------------------------------------------------------------------ composites

Var mse(const Var& a, const Var& b) {
    Var d = sub(a, b);
    return mean(mul(d, d));
}

Var cosine_similarity(const Var& a, const Var& b, double eps) {
    Var na = sqrt_(add_scalar(dot(a, a), eps));
    Var nb = sqrt_(add_scalar(dot(b, b), eps));
    return div(dot(a, b), mul(na, nb));
}

Var l2_normalize_channels(const Var& x, double eps) {
    Var sq = mul(x, x);
    Var n = sqrt_(add_scalar(reduce_c_sum(sq), eps));
    return mul_bcast_hw(x, recip(n));
}

Var cross_entropy(const Var& logits, int klass) {
    if (logits.shape().h != 1 || logits.shape().w != 1) throw ShapeError("ag::cross_entropy: expects a vector");
    if (klass < 0 || klass >= logits.shape().c) throw RangeError("ag::cross_entropy: class out of range");
    double mx = logits.value().array().maxCoeff();
    Var lse = add_scalar(log_(sum(exp_(add_scalar(logits, -mx)))), mx);
    return sub(lse, pick(logits, klass));
}

// -------------------------------------------------------------------- backward

void backward(const Var& root) {
    if (!root.defined() || root.shape().count() != 1) throw ShapeError("ag::backward: root must be a scalar");
    if (!root.requires_grad()) throw NumericError("ag::backward: root does not require grad");

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.node().get()};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->seq > b->seq; });

    root.node()->ensure_grad()[0] = 1.0;
    for (Node* n : order) {
        if (n->has_grad && n->backprop) n->backprop(*n);
    }
}

}  // namespace fswap::ag

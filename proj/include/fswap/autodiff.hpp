#ifndef FSWAP_AUTODIFF_HPP
#define FSWAP_AUTODIFF_HPP

#include <functional>
#include <memory>
#include <vector>

#include "fswap/tensor.hpp"

namespace fswap::ag {

// Reverse-mode tape over Tensor values. Ops build a DAG of shared nodes;
// backward() walks it once in reverse creation order. Single-threaded per
// graph; separate graphs are independent.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    bool has_grad = false;
    std::uint64_t seq = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // pulls this->grad into parents

    Tensor& ensure_grad() {
        if (!has_grad) {
            grad = Tensor::zeros(value.shape());
            has_grad = true;
        }
        return grad;
    }
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& value() { return node_->value; }
    const Tensor& grad() const;
    Tensor& grad_mut();
    bool has_grad() const { return node_ && node_->has_grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const Shape& shape() const { return node_->value.shape(); }
    void zero_grad() {
        if (node_ && node_->has_grad) node_->grad.array().setZero();
    }

    std::shared_ptr<Node> node() const { return node_; }
    static Var wrap(std::shared_ptr<Node> n) {
        Var v;
        v.node_ = std::move(n);
        return v;
    }

private:
    std::shared_ptr<Node> node_;
};

Var constant(Tensor v);

// Elementwise / scalar ops
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double k);
Var add_scalar(const Var& a, double k);
Var neg(const Var& a);
Var silu(const Var& a);
Var sigmoid(const Var& a);
Var tanh_(const Var& a);
Var exp_(const Var& a);
Var log_(const Var& a);
Var sqrt_(const Var& a);
Var recip(const Var& a);
Var mul_const(const Var& a, const Tensor& m);
Var add_const(const Var& a, const Tensor& m);

// Shape / structure
Var reshape(const Var& a, Shape s);
Var transpose(const Var& a);  // (m,n,1) -> (n,m,1)
Var concat_c(const std::vector<Var>& xs);
Var slice_c(const Var& a, int c0, int len);
Var pick(const Var& a, std::int64_t index);  // flat index -> scalar

// Linear algebra
Var matmul(const Var& a, const Var& b);  // (m,k,1) x (k,n,1) -> (m,n,1)

// Broadcast helpers
Var add_bias_c(const Var& x, const Var& b);      // b: (c,1,1) over (c,h,w)
Var mul_bias_c(const Var& x, const Var& v);      // per-channel scale
Var mul_bcast_hw(const Var& x, const Var& m);    // m: (1,h,w) over channels
Var mul_by(const Var& x, const Var& s);          // s: scalar Var
Var reduce_c_sum(const Var& x);                  // (c,h,w) -> (1,h,w)
Var spatial_mean(const Var& x);                  // (c,h,w) -> (c,1,1)

// Reductions
Var sum(const Var& a);
Var mean(const Var& a);
Var dot(const Var& a, const Var& b);

// Spatial ops
Var conv2d(const Var& x, const Var& w, const Var& b, int ksize, int pad);  // stride 1
Var avg_pool2(const Var& x);
Var upsample2(const Var& x);
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps = 1e-5);
Var softmax_cols(const Var& x);  // softmax over dim0 per column of (r,c,1)

// Composites
Var mse(const Var& a, const Var& b);
Var cosine_similarity(const Var& a, const Var& b, double eps = 1e-8);
Var l2_normalize_channels(const Var& x, double eps = 1e-8);  // per spatial location
Var cross_entropy(const Var& logits, int klass);

double scalar(const Var& v);
void backward(const Var& root);

}  // namespace fswap::ag

#endif

#ifndef FSWAP_TENSOR_HPP
#define FSWAP_TENSOR_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <initializer_list>
#include <string>

#include "fswap/common.hpp"

namespace fswap {

// (c, h, w) dense tensor over a flat Eigen array, row-major within each
// channel: index(ch, y, x) = (ch*h + y)*w + x.
// Vectors are stored as (n, 1, 1); matrices as (rows, cols, 1).
struct Shape {
    int c = 0, h = 0, w = 0;
    std::int64_t count() const { return static_cast<std::int64_t>(c) * h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tensor {
public:
    Tensor() = default;
    Tensor(int c, int h, int w) : shape_{c, h, w}, data_(Eigen::ArrayXd::Zero(shape_.count())) {
        if (c < 1 || h < 1 || w < 1) throw ShapeError("Tensor: non-positive dims " + shape_.str());
    }
    explicit Tensor(Shape s) : Tensor(s.c, s.h, s.w) {}
    Tensor(Shape s, Eigen::ArrayXd flat) : shape_(s), data_(std::move(flat)) {
        if (data_.size() != shape_.count())
            throw ShapeError("Tensor: flat size " + std::to_string(data_.size()) + " vs shape " + s.str());
    }

    static Tensor zeros(Shape s) { return Tensor(s); }
    static Tensor full(Shape s, double v) {
        Tensor t(s);
        t.data_.setConstant(v);
        return t;
    }
    static Tensor vec(std::initializer_list<double> vals) {
        Tensor t(static_cast<int>(vals.size()), 1, 1);
        int i = 0;
        for (double v : vals) t.data_[i++] = v;
        return t;
    }
    static Tensor from_vector(const Eigen::VectorXd& v) {
        return Tensor(Shape{static_cast<int>(v.size()), 1, 1}, v.array());
    }
    static Tensor randn(Shape s, Rng& rng) {
        Tensor t(s);
        for (auto& v : t) v = rng.normal();
        return t;
    }
    static Tensor rand_uniform(Shape s, Rng& rng, double lo = 0.0, double hi = 1.0) {
        Tensor t(s);
        for (auto& v : t) v = rng.uniform(lo, hi);
        return t;
    }

    const Shape& shape() const { return shape_; }
    int c() const { return shape_.c; }
    int h() const { return shape_.h; }
    int w() const { return shape_.w; }
    std::int64_t size() const { return data_.size(); }

    double& at(int ch, int y, int x) { return data_[(static_cast<std::int64_t>(ch) * shape_.h + y) * shape_.w + x]; }
    double at(int ch, int y, int x) const {
        return data_[(static_cast<std::int64_t>(ch) * shape_.h + y) * shape_.w + x];
    }
    double& operator[](std::int64_t i) { return data_[i]; }
    double operator[](std::int64_t i) const { return data_[i]; }

    Eigen::ArrayXd& array() { return data_; }
    const Eigen::ArrayXd& array() const { return data_; }

    // Matrix view for (rows, cols, 1) tensors and (c, h*w) flattenings.
    Eigen::Map<MatRM> mat(int rows, int cols) {
        if (static_cast<std::int64_t>(rows) * cols != size())
            throw ShapeError("Tensor::mat: " + std::to_string(rows) + "x" + std::to_string(cols) + " vs size " +
                             std::to_string(size()));
        return Eigen::Map<MatRM>(data_.data(), rows, cols);
    }
    Eigen::Map<const MatRM> mat(int rows, int cols) const {
        if (static_cast<std::int64_t>(rows) * cols != size())
            throw ShapeError("Tensor::mat: " + std::to_string(rows) + "x" + std::to_string(cols) + " vs size " +
                             std::to_string(size()));
        return Eigen::Map<const MatRM>(data_.data(), rows, cols);
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* begin() { return data_.data(); }
    double* end() { return data_.data() + data_.size(); }
    const double* begin() const { return data_.data(); }
    const double* end() const { return data_.data() + data_.size(); }

    bool all_finite() const { return data_.isFinite().all(); }
    double sum() const { return data_.sum(); }
    double mean() const { return data_.mean(); }
    double max_abs() const { return data_.abs().maxCoeff(); }

    Tensor reshaped(Shape s) const { return Tensor(s, data_); }

    std::uint64_t digest() const { return fnv1a64(data_.data(), sizeof(double) * data_.size()); }

private:
    Shape shape_{};
    Eigen::ArrayXd data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (!(a.shape() == b.shape()))
        throw ShapeError(std::string(who) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

inline std::string Shape::str() const {
    return "(" + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
}

}  // namespace fswap

#endif

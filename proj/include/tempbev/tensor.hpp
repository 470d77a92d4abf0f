#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace tempbev {

// Dense row-major tensor of doubles. Most of the model works on 2D
// [rows, cols] views; images and grids carry explicit 3D shapes.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0)
        : shape_(std::move(shape)), size_(numel_of(shape_)) {
        data_ = alloc(size_);
        std::fill(data_.get(), data_.get() + size_, fill);
    }
    Tensor(std::vector<int> shape, const std::vector<double>& data)
        : shape_(std::move(shape)), size_(numel_of(shape_)) {
        assert(static_cast<std::int64_t>(data.size()) == size_);
        data_ = alloc(size_);
        std::copy(data.begin(), data.end(), data_.get());
    }

    Tensor(const Tensor& o) : shape_(o.shape_), size_(o.size_) {
        data_ = alloc(size_);
        std::copy(o.data_.get(), o.data_.get() + size_, data_.get());
    }
    Tensor(Tensor&&) noexcept = default;
    Tensor& operator=(const Tensor& o) {
        if (this != &o) *this = Tensor(o);
        return *this;
    }
    Tensor& operator=(Tensor&&) noexcept = default;

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    // allocation without the zero fill, for outputs that are fully overwritten
    static Tensor uninit(std::vector<int> shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.size_ = numel_of(t.shape_);
        t.data_ = alloc(t.size_);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::int64_t numel() const { return size_; }

    // 2D accessors; a 1D tensor counts as a single row.
    int rows() const { return ndim() >= 2 ? shape_[0] : 1; }
    int cols() const {
        if (shape_.empty()) return 0;
        return static_cast<int>(numel() / rows());
    }

    double* data() { return data_.get(); }
    const double* data() const { return data_.get(); }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
    double& at2(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
    double at2(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }

    Tensor reshaped(std::vector<int> shape) const {
        assert(numel_of(shape) == numel());
        Tensor t(*this);
        t.shape_ = std::move(shape);
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    static std::int64_t numel_of(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    std::string shape_str() const;

private:
    // Fixed 64-byte alignment: vectorized kernels must not pick different code
    // paths (and hence different FP rounding) based on where the heap happens
    // to place a buffer, or bit-exact reproducibility across runs would break.
    struct AlignedDelete {
        void operator()(double* p) const {
            ::operator delete[](p, std::align_val_t(64));
        }
    };
    using Buf = std::unique_ptr<double[], AlignedDelete>;

    static Buf alloc(std::int64_t n) {
        if (n <= 0) return Buf(nullptr);
        return Buf(static_cast<double*>(::operator new[](
            sizeof(double) * static_cast<std::size_t>(n), std::align_val_t(64))));
    }

    std::vector<int> shape_;
    std::int64_t size_ = 0;
    Buf data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

}  // namespace tempbev

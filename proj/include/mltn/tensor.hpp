#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "mltn/errors.hpp"

namespace mltn {

// Dense n-dimensional array of 64-bit reals in row-major order.
// Extents are >= 1 and rank >= 1; values are plain doubles with no view or
// broadcasting machinery. All operations below are pure: they never mutate
// their inputs, so tensors can be shared freely across threads.
class Tensor {
public:
    Tensor() = default;

    // Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<std::size_t> shape);

    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor scalar(double value);  // rank-1, extent-1

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    // Multi-index access (row-major). Bounds-checked.
    double& at(std::initializer_list<std::size_t> idx);
    double at(std::initializer_list<std::size_t> idx) const;

    std::size_t offset_of(std::initializer_list<std::size_t> idx) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    // In-place helpers used throughout the library.
    Tensor& scale(double s);
    Tensor& add_scaled(const Tensor& other, double s);  // this += s * other
    void fill(double value);
    double max_abs() const;
    bool all_finite() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

// Same data, new shape; products must agree.
Tensor reshape(const Tensor& t, std::vector<std::size_t> new_shape);

// Standard rank-2 matrix product.
Tensor matmul(const Tensor& a, const Tensor& b);

// General pairwise contraction of a.shape[axis_a] against b.shape[axis_b].
// Result shape is (a.shape minus axis_a) ++ (b.shape minus axis_b); a fully
// contracted result is returned as a rank-1 extent-1 tensor.
Tensor contract_index(const Tensor& a, std::size_t axis_a, const Tensor& b,
                      std::size_t axis_b);

// Tensor (outer) product: rank(a)+rank(b), entry (i,j) = a[i]*b[j].
Tensor outer(const Tensor& a, const Tensor& b);

}  // namespace mltn

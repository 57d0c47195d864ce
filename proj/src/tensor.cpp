#include "mltn/tensor.hpp"

#include <cmath>
#include <sstream>

#include "mltn/flops.hpp"

namespace mltn {

namespace {

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void check_shape(const std::vector<std::size_t>& shape) {
    if (shape.empty())
        throw ShapeMismatch("tensor rank must be >= 1");
    for (std::size_t e : shape)
        if (e == 0)
            throw ShapeMismatch("tensor extents must be >= 1, got shape " +
                                shape_str(shape));
}

}  // namespace

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t p = 1;
    for (std::size_t e : shape) p *= e;
    return p;
}

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_product(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (shape_product(shape_) != data_.size())
        throw ShapeMismatch("shape " + shape_str(shape_) + " expects " +
                            std::to_string(shape_product(shape_)) +
                            " values, got " + std::to_string(data_.size()));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size())
        throw AxisOutOfRange("axis " + std::to_string(axis) +
                             " out of range for rank " +
                             std::to_string(shape_.size()));
    return shape_[axis];
}

std::size_t Tensor::offset_of(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size())
        throw AxisOutOfRange("index rank " + std::to_string(idx.size()) +
                             " does not match tensor rank " +
                             std::to_string(shape_.size()));
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
        if (i >= shape_[axis])
            throw AxisOutOfRange("index " + std::to_string(i) +
                                 " out of range for extent " +
                                 std::to_string(shape_[axis]));
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

double& Tensor::at(std::initializer_list<std::size_t> idx) {
    return data_[offset_of(idx)];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
    return data_[offset_of(idx)];
}

Tensor& Tensor::scale(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Tensor& Tensor::add_scaled(const Tensor& other, double s) {
    if (!same_shape(other))
        throw ShapeMismatch("add_scaled shapes differ: " + shape_str(shape_) +
                            " vs " + shape_str(other.shape_));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
    return *this;
}

void Tensor::fill(double value) {
    for (double& v : data_) v = value;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) {
        if (std::isnan(v)) return v;
        double a = std::fabs(v);
        if (a > m) m = a;
    }
    return m;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor reshape(const Tensor& t, std::vector<std::size_t> new_shape) {
    check_shape(new_shape);
    if (shape_product(new_shape) != t.size())
        throw ShapeMismatch("reshape from " + shape_str(t.shape()) + " to " +
                            shape_str(new_shape) + " changes element count");
    return Tensor(std::move(new_shape), t.values());
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeMismatch("matmul expects rank-2 operands");
    const std::size_t n = a.shape()[0];
    const std::size_t k = a.shape()[1];
    const std::size_t m = b.shape()[1];
    if (b.shape()[0] != k)
        throw ShapeMismatch("matmul inner dimensions disagree: " +
                            std::to_string(k) + " vs " +
                            std::to_string(b.shape()[0]));
    Tensor out({n, m});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const double aij = pa[i * k + j];
            const double* brow = pb + j * m;
            double* orow = po + i * m;
            for (std::size_t c = 0; c < m; ++c) orow[c] += aij * brow[c];
        }
    flops::add(static_cast<std::uint64_t>(n) * k * m);
    return out;
}

Tensor contract_index(const Tensor& a, std::size_t axis_a, const Tensor& b,
                      std::size_t axis_b) {
    if (axis_a >= a.rank())
        throw AxisOutOfRange("contract axis " + std::to_string(axis_a) +
                             " out of range for rank " + std::to_string(a.rank()));
    if (axis_b >= b.rank())
        throw AxisOutOfRange("contract axis " + std::to_string(axis_b) +
                             " out of range for rank " + std::to_string(b.rank()));
    const std::size_t shared = a.shape()[axis_a];
    if (b.shape()[axis_b] != shared)
        throw ShapeMismatch("contracted extents disagree: " +
                            std::to_string(shared) + " vs " +
                            std::to_string(b.shape()[axis_b]));

    // View each operand as [outer, shared, inner] with the contracted axis in
    // the middle; the result is then a nest of four loops.
    auto split = [](const Tensor& t, std::size_t axis) {
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < axis; ++i) outer *= t.shape()[i];
        for (std::size_t i = axis + 1; i < t.rank(); ++i) inner *= t.shape()[i];
        return std::pair<std::size_t, std::size_t>{outer, inner};
    };
    auto [ao, ai] = split(a, axis_a);
    auto [bo, bi] = split(b, axis_b);

    std::vector<std::size_t> out_shape;
    for (std::size_t i = 0; i < a.rank(); ++i)
        if (i != axis_a) out_shape.push_back(a.shape()[i]);
    for (std::size_t i = 0; i < b.rank(); ++i)
        if (i != axis_b) out_shape.push_back(b.shape()[i]);
    if (out_shape.empty()) out_shape.push_back(1);  // fully contracted

    Tensor out(out_shape);
    double* po = out.data();
    const double* pa = a.data();
    const double* pb = b.data();
    const std::size_t b_block = bo * bi;
    for (std::size_t x = 0; x < ao; ++x)
        for (std::size_t s = 0; s < shared; ++s)
            for (std::size_t y = 0; y < ai; ++y) {
                const double av = pa[(x * shared + s) * ai + y];
                double* orow = po + (x * ai + y) * b_block;
                for (std::size_t u = 0; u < bo; ++u) {
                    const double* brow = pb + (u * shared + s) * bi;
                    double* orow2 = orow + u * bi;
                    for (std::size_t v = 0; v < bi; ++v) orow2[v] += av * brow[v];
                }
            }
    flops::add(static_cast<std::uint64_t>(ao) * ai * shared * bo * bi);
    return out;
}

Tensor outer(const Tensor& a, const Tensor& b) {
    std::vector<std::size_t> out_shape = a.shape();
    out_shape.insert(out_shape.end(), b.shape().begin(), b.shape().end());
    Tensor out(out_shape);
    double* po = out.data();
    const double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) po[i * b.size() + j] = pa[i] * pb[j];
    flops::add(static_cast<std::uint64_t>(a.size()) * b.size());
    return out;
}

}  // namespace mltn

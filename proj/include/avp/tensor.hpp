#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace avp {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

// Dense n-dimensional array of doubles, row-major. Plain value type; gradient
// bookkeeping lives in Tape / Variable.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> values);
    Tensor(Shape shape, std::initializer_list<double> values);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_[axis]; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double& at(std::size_t i, std::size_t j) { return values_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return values_[i * shape_[1] + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return values_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return values_[(i * shape_[1] + j) * shape_[2] + k];
    }

    void fill(double v) { values_.assign(values_.size(), v); }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool is_scalar() const { return values_.size() == 1; }
    double scalar_value() const { return values_[0]; }

    bool all_finite() const;

private:
    Shape shape_;
    std::vector<double> values_;
};

std::size_t shape_size(const Shape& shape);

} // namespace avp

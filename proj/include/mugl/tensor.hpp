#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace mugl {

/// Dense row-major tensor of doubles. This is the value type the autodiff
/// tape, the model and the training loop all share; shapes are checked at
/// operation boundaries, not on element access.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> shape);

    static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::int64_t> shape, double value);
    static Tensor from(std::vector<std::int64_t> shape, std::vector<double> values);
    static Tensor scalar(double value) { return from({}, {value}); }

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }
    bool empty() const { return values_.empty(); }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    double& operator[](std::int64_t i) { return values_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return values_[static_cast<std::size_t>(i)]; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void fill(double value);

    /// Reshape in place; total element count must be preserved.
    void reshape(std::vector<std::int64_t> shape);

    std::string shape_str() const;

    static std::int64_t element_count(const std::vector<std::int64_t>& shape);

private:
    std::vector<std::int64_t> shape_;
    std::vector<double> values_;
};

} // namespace mugl

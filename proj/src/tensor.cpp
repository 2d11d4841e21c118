#include "mugl/tensor.hpp"

#include <cmath>
#include <sstream>

#include "mugl/errors.hpp"

namespace mugl {

std::int64_t Tensor::element_count(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
        if (d < 0) throw ShapeMismatch("negative dimension");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), values_(static_cast<std::size_t>(element_count(shape_)), 0.0) {}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::from(std::vector<std::int64_t> shape, std::vector<double> values) {
    if (element_count(shape) != static_cast<std::int64_t>(values.size()))
        throw ShapeMismatch("value count does not match shape");
    Tensor t;
    t.shape_ = std::move(shape);
    t.values_ = std::move(values);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : values_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(double value) {
    for (double& v : values_) v = value;
}

void Tensor::reshape(std::vector<std::int64_t> shape) {
    if (element_count(shape) != size())
        throw ShapeMismatch("reshape changes element count");
    shape_ = std::move(shape);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ",";
        os << shape_[i];
    }
    os << ")";
    return os.str();
}

} // namespace mugl

#include "psir/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace psir {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::int64_t> shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {
    for (auto d : shape_)
        if (d < 0) throw std::invalid_argument("Tensor: negative dimension in " + shape_str());
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.data_.assign(1, v);
    return t;
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape), 0.0); }

Tensor Tensor::full(std::vector<std::int64_t> shape, double v) { return Tensor(std::move(shape), v); }

Tensor Tensor::from(std::vector<double> data, std::vector<std::int64_t> shape) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
        throw std::invalid_argument("Tensor::from: data size " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

Tensor Tensor::reshaped(std::vector<std::int64_t> shape) const {
    if (shape_numel(shape) != size())
        throw std::invalid_argument("Tensor::reshaped: cannot reshape " + shape_str() + " to " +
                                    shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
}

void Tensor::fill(double v) { data_.assign(data_.size(), v); }

bool Tensor::has_nan() const {
    for (double v : data_)
        if (std::isnan(v)) return true;
    return false;
}

std::string Tensor::shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

} // namespace psir

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace psir {

/// Dense row-major array of 64-bit floats. Rank 0 is a scalar with one
/// element. This is the only numeric container in the engine; all shapes
/// are explicit and there are no views.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::int64_t> shape, double fill = 0.0);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<std::int64_t> shape);
    static Tensor full(std::vector<std::int64_t> shape, double v);
    static Tensor from(std::vector<double> data, std::vector<std::int64_t> shape);

    bool empty() const { return data_.empty() && shape_.empty(); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // rank-2 accessors (row, col)
    double& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }
    double at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    /// Returns a copy with a new shape; element count must match.
    Tensor reshaped(std::vector<std::int64_t> shape) const;

    void fill(double v);
    bool has_nan() const;

    std::string shape_str() const;
    static std::string shape_str(const std::vector<std::int64_t>& shape);

private:
    std::vector<std::int64_t> shape_;
    std::vector<double> data_;
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);

} // namespace psir

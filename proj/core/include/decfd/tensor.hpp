#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace decfd::nn {

/// Dense row-major tensor of doubles. Rank 0 (scalar), 1 and 2 are the shapes
/// the model graphs use; the checkpoint format accepts any rank.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    std::size_t rows() const;
    std::size_t cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    /// Value of a single-element tensor.
    double item() const;

    void fill(double v);
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    double sum() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
    std::size_t cols_ = 0;  // cached for rank-2 indexing
};

/// Trainable parameter: value plus an accumulated gradient of the same shape.
struct Param {
    Tensor value;
    Tensor grad;
    std::string name;

    Param() = default;
    Param(std::string name, Tensor value);

    void zero_grad();
    std::size_t size() const { return value.size(); }
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

}  // namespace decfd::nn

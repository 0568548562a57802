#include "decfd/tensor.hpp"

#include <cassert>
#include <cmath>
#include <utility>

namespace decfd::nn {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {
    cols_ = shape_.size() == 2 ? shape_[1] : 0;
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    assert(data_.size() == shape_product(shape_));
    cols_ = shape_.size() == 2 ? shape_[1] : 0;
}

Tensor Tensor::scalar(double v) {
    return Tensor({}, {v});
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    return Tensor(std::move(shape));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

std::size_t Tensor::rows() const {
    assert(rank() == 2);
    return shape_[0];
}

std::size_t Tensor::cols() const {
    assert(rank() == 2);
    return shape_[1];
}

double Tensor::item() const {
    assert(size() == 1);
    return data_[0];
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

double Tensor::sum() const {
    double s = 0.0;
    for (double x : data_) s += x;
    return s;
}

Param::Param(std::string name, Tensor value)
    : value(std::move(value)), grad(Tensor::zeros(this->value.shape())), name(std::move(name)) {}

void Param::zero_grad() {
    grad.fill(0.0);
}

}  // namespace decfd::nn

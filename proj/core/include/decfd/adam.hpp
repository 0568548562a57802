#pragma once

#include <cstddef>
#include <vector>

#include "decfd/tensor.hpp"

namespace decfd::nn {

struct AdamConfig {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-6;  // L2 added onto the gradient, not decoupled
};

/// Adam with bias correction. L2 regularization enters as
/// weight_decay * value added to the gradient before the moment update.
class Adam {
public:
    Adam(std::vector<Param*> params, AdamConfig cfg);

    void step();
    void zero_grad();

    std::size_t t() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    std::size_t num_params() const { return params_.size(); }

    // moment state, exposed for checkpointing
    Tensor& m(std::size_t i) { return m_[i]; }
    Tensor& v(std::size_t i) { return v_[i]; }
    const Param& param(std::size_t i) const { return *params_[i]; }
    void set_t(std::size_t t) { t_ = t; }

private:
    std::vector<Param*> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::size_t t_ = 0;
    AdamConfig cfg_;
};

}  // namespace decfd::nn

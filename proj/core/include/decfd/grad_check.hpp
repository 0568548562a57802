#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "decfd/tensor.hpp"

namespace decfd::nn {

struct GradCheckOptions {
    double step = 1e-5;  // central difference half-step
    /// Relative error denominator floor; coordinates whose analytic and
    /// numeric magnitudes both fall below it cannot be resolved against
    /// finite-difference noise and are scored against the floor instead.
    double denom_floor = 1e-3;
    std::size_t coords_per_param = 64;
    std::uint64_t seed = 0x5eed;
};

/// Central-difference check of the gradients left in params by loss_fn.
///
/// Protocol: loss_fn is called once to populate param gradients (it must
/// zero them, run forward+backward, and return the loss), then re-invoked
/// forward-only at perturbed parameter values via eval_fn. Both callables
/// must be deterministic: same params in, same loss out (freeze any noise).
/// Returns the maximum relative error over the sampled coordinates.
double grad_check(const std::function<double()>& loss_fn,
                  const std::function<double()>& eval_fn,
                  const std::vector<Param*>& params,
                  const GradCheckOptions& opt = {});

/// Convenience wrapper using loss_fn for both roles (gradients recomputed
/// at every probe; slower but simplest for small graphs).
double grad_check(const std::function<double()>& loss_fn,
                  const std::vector<Param*>& params,
                  const GradCheckOptions& opt = {});

}  // namespace decfd::nn

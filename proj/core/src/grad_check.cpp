#include "decfd/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "decfd/rng.hpp"

namespace decfd::nn {

double grad_check(const std::function<double()>& loss_fn,
                  const std::function<double()>& eval_fn,
                  const std::vector<Param*>& params,
                  const GradCheckOptions& opt) {
    loss_fn();

    // snapshot analytic gradients before probing
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const Param* p : params) analytic.push_back(p->grad);

    Rng rng(opt.seed);
    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param& p = *params[pi];
        const std::size_t n = p.size();
        std::vector<std::size_t> coords;
        if (n <= opt.coords_per_param) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            coords.reserve(opt.coords_per_param);
            std::vector<std::size_t> all(n);
            for (std::size_t i = 0; i < n; ++i) all[i] = i;
            rng.shuffle(all);
            coords.assign(all.begin(), all.begin() + opt.coords_per_param);
        }
        for (std::size_t c : coords) {
            double* slot = p.value.data() + c;
            const double orig = *slot;
            *slot = orig + opt.step;
            const double fp = eval_fn();
            *slot = orig - opt.step;
            const double fm = eval_fn();
            *slot = orig;
            const double fd = (fp - fm) / (2.0 * opt.step);
            const double a = analytic[pi][c];
            const double denom = std::max({std::abs(a), std::abs(fd), opt.denom_floor});
            max_rel = std::max(max_rel, std::abs(a - fd) / denom);
        }
    }
    return max_rel;
}

double grad_check(const std::function<double()>& loss_fn,
                  const std::vector<Param*>& params,
                  const GradCheckOptions& opt) {
    return grad_check(loss_fn, loss_fn, params, opt);
}

}  // namespace decfd::nn

#include "decfd/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "decfd/errors.hpp"

namespace decfd::metrics {

Confusion confusion(std::span<const double> probs, std::span<const int> labels,
                    double threshold) {
    if (probs.size() != labels.size()) {
        throw DataError("confusion: probs and labels length mismatch");
    }
    Confusion c;
    c.threshold = threshold;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const bool pred = probs[i] >= threshold;
        const bool truth = labels[i] == 1;
        if (pred && truth) ++c.tp;
        else if (pred && !truth) ++c.fp;
        else if (!pred && truth) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double accuracy(const Confusion& c) {
    const std::size_t n = c.total();
    if (n == 0) throw DataError("accuracy: empty confusion");
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
}

double mcc(const Confusion& c) {
    const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
    const double d1 = tp + fp, d2 = tp + fn, d3 = tn + fp, d4 = tn + fn;
    if (d1 == 0.0 || d2 == 0.0 || d3 == 0.0 || d4 == 0.0) return 0.0;
    return (tp * tn - fp * fn) / std::sqrt(d1 * d2 * d3 * d4);
}

double f1(const Confusion& c) {
    const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
    if (denom == 0.0) return 0.0;
    return 2.0 * static_cast<double>(c.tp) / denom;
}

Scores scores(const Confusion& c) {
    return Scores{accuracy(c), mcc(c), f1(c)};
}

}  // namespace decfd::metrics

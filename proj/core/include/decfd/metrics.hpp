#pragma once

#include <cstddef>
#include <span>

namespace decfd::metrics {

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    double threshold = 0.5;

    std::size_t total() const { return tp + fp + fn + tn; }
};

/// Prediction is positive iff prob >= threshold (ties predict positive).
Confusion confusion(std::span<const double> probs, std::span<const int> labels,
                    double threshold = 0.5);

/// (tp + tn) / total. Throws on an empty confusion.
double accuracy(const Confusion& c);

/// Matthews correlation; 0 when any denominator factor is 0.
double mcc(const Confusion& c);

/// Positive-class binary F1: 2tp / (2tp + fp + fn); 0 when the denominator is 0.
double f1(const Confusion& c);

struct Scores {
    double acc = 0.0;
    double mcc = 0.0;
    double f1 = 0.0;
};

Scores scores(const Confusion& c);

}  // namespace decfd::metrics

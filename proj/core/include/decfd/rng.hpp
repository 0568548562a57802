#pragma once

#include <cstdint>
#include <vector>

namespace decfd {

/// Deterministic random source. All distributions are implemented in-house
/// (std::*_distribution output is not pinned by the standard) so that seeded
/// runs and frozen golden values reproduce across platforms and toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01();
    double uniform(double lo, double hi);

    /// Uniform integer in [0, n). Rejection-sampled, unbiased. n must be > 0.
    std::size_t uniform_int(std::size_t n);

    bool bernoulli(double p);

    /// Standard normal via Box-Muller (spare value cached).
    double normal();
    double normal(double mean, double stddev);

    /// Gamma(alpha, 1) via Marsaglia-Tsang, alpha > 0.
    double gamma(double alpha);

    /// Dirichlet sample from per-component concentrations.
    std::vector<double> dirichlet(const std::vector<double>& alpha);

    /// Fisher-Yates in-place shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = uniform_int(i + 1);
            std::swap(v[i], v[j]);
        }
    }

    /// Independent stream derived from this seed and a stream index.
    Rng fork(std::uint64_t stream) const;

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
    std::uint64_t seed_;
};

}  // namespace decfd

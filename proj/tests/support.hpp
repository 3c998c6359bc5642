#pragma once

// Shared helpers for the test binaries.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "synkpar/tensor.hpp"

namespace testsup {

// Mixed relative/absolute error: |a-b| / max(1, |b|). Relative for large
// magnitudes, absolute near zero, so tolerances like 1e-12 read naturally
// for both.
inline double elem_err(double a, double b) {
    double denom = std::max(1.0, std::abs(b));
    return std::abs(a - b) / denom;
}

// Worst elem_err across two equal-shaped buffers; +inf on shape mismatch.
inline double max_err(const synkpar::NdBuffer& a, const synkpar::NdBuffer& b) {
    if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, elem_err(a.get(i), b.get(i)));
    }
    return worst;
}

// Deterministic uniform [-1, 1) buffer.
inline synkpar::NdBuffer random_buffer(std::vector<std::size_t> shape, std::uint64_t seed,
                                       synkpar::DType dtype = synkpar::DType::Float64) {
    synkpar::NdBuffer buf = synkpar::NdBuffer::zeros(std::move(shape), dtype);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (std::size_t i = 0; i < buf.size(); ++i) buf.set(i, dist(rng));
    return buf;
}

// Buffer whose flat element i holds start + i (easy to eyeball in failures).
inline synkpar::NdBuffer iota_buffer(std::vector<std::size_t> shape, double start = 0.0,
                                     synkpar::DType dtype = synkpar::DType::Float64) {
    synkpar::NdBuffer buf = synkpar::NdBuffer::zeros(std::move(shape), dtype);
    for (std::size_t i = 0; i < buf.size(); ++i) buf.set(i, start + static_cast<double>(i));
    return buf;
}

inline std::vector<std::size_t> random_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> dist(0, i - 1);
        std::swap(p[i - 1], p[dist(rng)]);
    }
    return p;
}

inline std::vector<std::size_t> random_sample(std::size_t n, std::size_t count,
                                              std::uint64_t seed) {
    std::vector<std::size_t> s(count);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    for (std::size_t i = 0; i < count; ++i) s[i] = dist(rng);
    return s;
}

} // namespace testsup

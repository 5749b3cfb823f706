#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string_view>

#include "cmr/errors.hpp"

namespace cmr {

// A point on the K-simplex: entries >= 0, summing to 1 within
// simplex_tolerance. Produced by LDA inference, synthetic generation and
// image embedding; consumed by retrieval.
using TopicDistribution = Eigen::VectorXd;

inline constexpr double simplex_tolerance = 1e-9;

inline bool is_distribution(const Eigen::VectorXd& p, double tol = simplex_tolerance) {
    if (p.size() == 0) return false;
    if ((p.array() < 0.0).any()) return false;
    return std::abs(p.sum() - 1.0) <= tol;
}

inline void validate_distribution(const Eigen::VectorXd& p, const char* context) {
    if (!is_distribution(p)) {
        throw InternalConsistencyError(std::string(context) +
                                       ": vector is not a probability distribution");
    }
}

// FNV-1a, used for vocabulary/model fingerprints and content-derived seeds.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a64_bytes(const void* data, std::size_t n,
                                   std::uint64_t h = 14695981039346656037ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace cmr

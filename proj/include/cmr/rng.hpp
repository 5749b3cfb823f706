#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

#include "cmr/errors.hpp"

namespace cmr {

// Seeded random source. All samplers are built directly on the mt19937_64
// bit stream (std::* distributions are implementation-defined), so a seed
// pins the exact sample sequence.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1]; safe as a log argument.
    double uniform_pos() { return 1.0 - uniform(); }

    // Uniform integer in [0, n), bias-free by rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller (no cached spare, so the draw count per
    // call is fixed).
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Gamma(shape, 1) via Marsaglia-Tsang, with the standard shape<1 boost.
    double gamma(double shape);

    Eigen::VectorXd dirichlet(const Eigen::VectorXd& alpha);

    Eigen::VectorXd dirichlet_symmetric(int k, double alpha) {
        return dirichlet(Eigen::VectorXd::Constant(k, alpha));
    }

    // Index sampled proportionally to non-negative weights.
    int categorical(const Eigen::VectorXd& weights);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_int(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace cmr

#include "cmr/rng.hpp"

#include <cmath>

namespace cmr {

double Rng::gamma(double shape) {
    if (shape <= 0.0) {
        throw InvalidHyperparameter("gamma shape must be positive");
    }
    if (shape < 1.0) {
        const double u = uniform_pos();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / (3.0 * std::sqrt(d));
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform_pos();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

Eigen::VectorXd Rng::dirichlet(const Eigen::VectorXd& alpha) {
    if (alpha.size() == 0 || (alpha.array() <= 0.0).any()) {
        throw InvalidHyperparameter("dirichlet concentration must be positive");
    }
    Eigen::VectorXd g(alpha.size());
    for (Eigen::Index i = 0; i < alpha.size(); ++i) {
        g[i] = gamma(alpha[i]);
    }
    const double total = g.sum();
    if (total <= 0.0) {
        // All gammas underflowed; fall back to the prior mean.
        return Eigen::VectorXd::Constant(alpha.size(), 1.0 / static_cast<double>(alpha.size()));
    }
    return g / total;
}

int Rng::categorical(const Eigen::VectorXd& weights) {
    const double total = weights.sum();
    if (!(total > 0.0)) {
        throw InvalidHyperparameter("categorical weights must have positive sum");
    }
    const double target = uniform() * total;
    double acc = 0.0;
    for (Eigen::Index k = 0; k < weights.size(); ++k) {
        acc += weights[k];
        if (target < acc) return static_cast<int>(k);
    }
    return static_cast<int>(weights.size() - 1);
}

}  // namespace cmr

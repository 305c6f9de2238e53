#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "rigfield/core/errors.hpp"

namespace rigfield::neus {

// log of the logistic sigmoid, stable for large |x|.
inline double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// Discrete opacity of the section between consecutive SDF samples:
//   alpha = max((Phi(s f0) - Phi(s f1)) / Phi(s f0), 0),  Phi = logistic sigmoid.
// Evaluated as 1 - exp(log Phi(s f1) - log Phi(s f0)) so deep-inside samples do not underflow.
inline double section_alpha(double f0, double f1, double s) {
    const double delta = log_sigmoid(s * f1) - log_sigmoid(s * f0);
    return delta >= 0 ? 0.0 : -std::expm1(delta);
}

// Partial derivatives of section_alpha with respect to f0, f1 and s (zero where clamped).
struct AlphaGrad {
    double d_f0 = 0, d_f1 = 0, d_s = 0;
};

inline AlphaGrad section_alpha_grad(double f0, double f1, double s) {
    const double delta = log_sigmoid(s * f1) - log_sigmoid(s * f0);
    if (delta >= 0) return {};
    const double dalpha_ddelta = -std::exp(delta);
    const double g1 = sigmoid(-s * f1), g0 = sigmoid(-s * f0);
    return {dalpha_ddelta * (-s * g0), dalpha_ddelta * (s * g1), dalpha_ddelta * (f1 * g1 - f0 * g0)};
}

// Per-sample alphas; the final sample has no following section and gets alpha 0.
inline std::vector<double> alphas(std::span<const float> sdf, double s) {
    require(sdf.size() >= 2, "neus: need at least 2 samples");
    require(s > 0, "neus: sharpness must be positive");
    std::vector<double> a(sdf.size(), 0.0);
    for (std::size_t i = 0; i + 1 < sdf.size(); ++i) a[i] = section_alpha(sdf[i], sdf[i + 1], s);
    return a;
}

// w_i = alpha_i * prod_{j<i} (1 - alpha_j).
inline std::vector<double> composite_weights(std::span<const double> alpha) {
    std::vector<double> w(alpha.size());
    double trans = 1.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        w[i] = alpha[i] * trans;
        trans *= 1.0 - alpha[i];
    }
    return w;
}

inline std::vector<double> weights(std::span<const float> sdf, double s) {
    const auto a = alphas(sdf, s);
    return composite_weights(a);
}

}  // namespace rigfield::neus

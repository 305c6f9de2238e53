#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "rigfield/core/errors.hpp"

namespace rigfield {

struct AdamConfig {
    double learning_rate = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-15;
};

// Adam with per-range freezing. Frozen ranges keep their values and moments.
template <typename Scalar>
class Adam {
public:
    Adam(std::size_t size, AdamConfig cfg = {}) : cfg_(cfg), m_(size, 0.0), v_(size, 0.0), trainable_(size, 1) {
        require(cfg.learning_rate > 0, "learning rate must be positive");
        require(cfg.beta1 >= 0 && cfg.beta1 < 1 && cfg.beta2 >= 0 && cfg.beta2 < 1, "Adam betas must lie in [0, 1)");
    }

    void freeze(std::int64_t offset, std::int64_t count) {
        for (std::int64_t i = offset; i < offset + count; ++i) trainable_[static_cast<std::size_t>(i)] = 0;
    }

    const AdamConfig& config() const { return cfg_; }
    void set_learning_rate(double lr) {
        require(lr > 0, "learning rate must be positive");
        cfg_.learning_rate = lr;
    }
    long steps() const { return t_; }

    void reset() {
        std::fill(m_.begin(), m_.end(), 0.0);
        std::fill(v_.begin(), v_.end(), 0.0);
        t_ = 0;
    }

    void step(std::span<Scalar> params, std::span<const double> grad) {
        require(params.size() == m_.size() && grad.size() == m_.size(), "Adam::step: size mismatch");
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        const double step = cfg_.learning_rate * std::sqrt(bc2) / bc1;
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!trainable_[i]) continue;
            const double g = grad[i];
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
            params[i] = static_cast<Scalar>(static_cast<double>(params[i]) - step * m_[i] / (std::sqrt(v_[i]) + cfg_.epsilon));
        }
    }

private:
    AdamConfig cfg_;
    std::vector<double> m_, v_;
    std::vector<unsigned char> trainable_;
    long t_ = 0;
};

}  // namespace rigfield

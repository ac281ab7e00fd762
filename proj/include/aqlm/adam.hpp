#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace aqlm {

struct AdamSettings {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
};

// Bias-corrected Adam over one flat parameter vector. No weight decay, no clipping.
class Adam {
public:
    Adam(std::size_t n, AdamSettings settings) : settings_(settings), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grads) {
        ++t_;
        const double c1 = 1.0 - std::pow(settings_.beta1, double(t_));
        const double c2 = 1.0 - std::pow(settings_.beta2, double(t_));
        for (std::size_t p = 0; p < params.size(); ++p) {
            m_[p] = settings_.beta1 * m_[p] + (1.0 - settings_.beta1) * grads[p];
            v_[p] = settings_.beta2 * v_[p] + (1.0 - settings_.beta2) * grads[p] * grads[p];
            const double mhat = m_[p] / c1;
            const double vhat = v_[p] / c2;
            params[p] -= settings_.lr * mhat / (std::sqrt(vhat) + settings_.eps);
        }
    }

    std::size_t steps() const { return t_; }

private:
    AdamSettings settings_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::size_t t_ = 0;
};

}  // namespace aqlm

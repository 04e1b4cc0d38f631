#include "somnus/optim.hpp"

#include <cmath>

#include "somnus/error.hpp"

namespace somnus {

void OptimizerConfig::validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw ConfigError("optimizer: beta1/beta2 must lie in (0,1)");
    }
    if (!(lr > 0.0) || !(sigma > 0.0)) {
        throw ConfigError("optimizer: lr and sigma must be positive");
    }
    if (epochs < 0 || batch_size < 1) {
        throw ConfigError("optimizer: epochs must be >= 0 and batch_size >= 1");
    }
}

void adam_step(const std::vector<ParamPtr>& params, const OptimizerConfig& opt) {
    for (const auto& p : params) {
        if (!p->trainable) continue;
        auto& theta = p->value.data();
        const std::size_t n = theta.size();
        const std::vector<double>* grad = nullptr;
        std::vector<double> zeros;
        if (p->value.has_grad()) {
            grad = &p->value.grad();
        } else {
            zeros.assign(n, 0.0);
            grad = &zeros;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite((*grad)[i])) {
                throw DivergenceError("adam_step: non-finite gradient in parameter '" +
                                      p->name + "'");
            }
        }
        p->step_count += 1;
        const double t = static_cast<double>(p->step_count);
        const double bc1 = 1.0 - std::pow(opt.beta1, t);
        const double bc2 = 1.0 - std::pow(opt.beta2, t);
        for (std::size_t i = 0; i < n; ++i) {
            const double g = (*grad)[i];
            p->adam_m[i] = opt.beta1 * p->adam_m[i] + (1.0 - opt.beta1) * g;
            p->adam_v[i] = opt.beta2 * p->adam_v[i] + (1.0 - opt.beta2) * g * g;
            const double m_hat = p->adam_m[i] / bc1;
            const double v_hat = p->adam_v[i] / bc2;
            theta[i] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.sigma);
        }
        p->value.clear_grad();
    }
}

}  // namespace somnus

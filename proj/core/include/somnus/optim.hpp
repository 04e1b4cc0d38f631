#pragma once

#include <cstdint>
#include <vector>

#include "somnus/param.hpp"

namespace somnus {

// ADAM constants plus the training-loop knobs that travel with them.
// sigma is the stabilizing constant added to the denominator outside the
// square root: theta -= lr * m_hat / (sqrt(v_hat) + sigma).
struct OptimizerConfig {
    double lr = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double sigma = 1e-5;
    int epochs = 30;
    int batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

// One ADAM update over `params`. Frozen parameters are untouched; missing
// grads count as zero; grads of all trainable parameters are cleared after
// the step. Throws DivergenceError (naming the parameter) on non-finite
// gradients.
void adam_step(const std::vector<ParamPtr>& params, const OptimizerConfig& opt);

}  // namespace somnus

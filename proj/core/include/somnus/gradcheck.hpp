#pragma once

#include <functional>
#include <string>
#include <vector>

#include "somnus/tensor.hpp"

namespace somnus {

struct GradCheckEntry {
    std::string label;
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> inputs;  // one entry per checked tensor
    double max_rel_err = 0.0;
    double rel_tol = 0.0;
    bool passed = false;
};

using TensorFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares the analytic gradient of the scalar-valued f against central
// finite differences, element by element, for every tensor in `inputs`.
// Relative error is normalized per tensor by max(|analytic|_inf, |fd|_inf,
// 1e-4) so near-zero gradients degrade into an absolute check instead of
// blowing up. The function must be differentiable at the sample point; nudge
// inputs away from relu/argmax kinks first (see debug::*_kink monitors).
GradCheckReport gradcheck(const TensorFn& f, std::vector<Tensor> inputs,
                          double rel_tol = 1e-4, double step = 1e-5,
                          std::vector<std::string> labels = {});

}  // namespace somnus

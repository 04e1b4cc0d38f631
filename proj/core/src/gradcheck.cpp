#include "somnus/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace somnus {

GradCheckReport gradcheck(const TensorFn& f, std::vector<Tensor> inputs,
                          double rel_tol, double step,
                          std::vector<std::string> labels) {
    GradCheckReport report;
    report.rel_tol = rel_tol;

    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.clear_grad();
    }

    Tensor loss = f(inputs);
    if (loss.numel() != 1) {
        throw ShapeError("gradcheck: f must return a single-element tensor");
    }
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (const auto& t : inputs) {
        analytic.push_back(t.has_grad() ? t.grad()
                                        : std::vector<double>(t.numel(), 0.0));
    }

    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        GradCheckEntry entry;
        entry.label = ti < labels.size() ? labels[ti] : "input" + std::to_string(ti);
        auto& values = inputs[ti].data();
        std::vector<double> numeric(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double up = f(inputs).item();
            values[i] = saved - step;
            const double down = f(inputs).item();
            values[i] = saved;
            numeric[i] = (up - down) / (2.0 * step);
        }
        double scale = 1e-4;
        for (std::size_t i = 0; i < values.size(); ++i) {
            scale = std::max({scale, std::abs(analytic[ti][i]), std::abs(numeric[i])});
        }
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double rel = std::abs(analytic[ti][i] - numeric[i]) / scale;
            if (rel >= entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_index = i;
                entry.analytic_at_worst = analytic[ti][i];
                entry.numeric_at_worst = numeric[i];
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.inputs.push_back(std::move(entry));
    }
    report.passed = report.max_rel_err < rel_tol;
    return report;
}

}  // namespace somnus

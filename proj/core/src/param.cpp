#include "somnus/param.hpp"

#include <cmath>

#include "somnus/error.hpp"
#include "somnus/rng.hpp"

namespace somnus {

ParamPtr make_param(std::string name, Shape shape, const InitSpec& init,
                    std::uint64_t global_seed) {
    const std::size_t n = numel(shape);
    std::vector<double> values(n, 0.0);
    switch (init.kind) {
        case InitSpec::Kind::zeros:
            break;
        case InitSpec::Kind::ones:
            values.assign(n, 1.0);
            break;
        case InitSpec::Kind::constant:
            values.assign(n, init.value);
            break;
        case InitSpec::Kind::fan_in_uniform: {
            Rng rng(derive_seed(global_seed, name));
            const double bound = std::sqrt(1.0 / static_cast<double>(init.fan));
            for (double& v : values) v = rng.uniform(-bound, bound);
            break;
        }
        case InitSpec::Kind::lstm_bias: {
            // Zeros except the forget gate, which starts open.
            for (std::size_t i = init.hidden; i < 2 * init.hidden && i < n; ++i) {
                values[i] = 1.0;
            }
            break;
        }
    }
    auto p = std::make_shared<Parameter>();
    p->name = std::move(name);
    p->value = Tensor(std::move(shape), std::move(values), true);
    p->adam_m.assign(n, 0.0);
    p->adam_v.assign(n, 0.0);
    return p;
}

ParamPtr ParameterRegistry::add(ParamPtr p) {
    if (!p) throw BuildError("registry: null parameter");
    auto [it, inserted] = by_name_.try_emplace(p->name, params_.size());
    if (!inserted) {
        throw BuildError("registry: duplicate parameter name '" + p->name + "'");
    }
    for (const auto& existing : params_) {
        if (existing.get() == p.get()) {
            throw BuildError("registry: parameter '" + p->name + "' registered twice");
        }
    }
    params_.push_back(std::move(p));
    return params_.back();
}

ParamPtr ParameterRegistry::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : params_[it->second];
}

void ParameterRegistry::zero_grad() {
    for (auto& p : params_) p->value.clear_grad();
}

}  // namespace somnus

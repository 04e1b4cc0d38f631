#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "somnus/tensor.hpp"

namespace somnus {

// Weight initialization recipes. Everything is derived from the parameter
// name plus a global seed, so adding unrelated parameters to a model never
// shifts another parameter's draw.
struct InitSpec {
    enum class Kind { zeros, ones, constant, fan_in_uniform, lstm_bias };
    Kind kind = Kind::zeros;
    double value = 0.0;    // constant
    std::size_t fan = 1;   // fan_in_uniform
    std::size_t hidden = 0;  // lstm_bias: forget-gate segment gets 1.0

    static InitSpec zeros() { return {}; }
    static InitSpec ones() { return {Kind::ones, 0.0, 1, 0}; }
    static InitSpec constant(double v) { return {Kind::constant, v, 1, 0}; }
    static InitSpec fan_in(std::size_t fan) {
        return {Kind::fan_in_uniform, 0.0, fan, 0};
    }
    static InitSpec lstm_bias(std::size_t hidden) {
        return {Kind::lstm_bias, 0.0, 1, hidden};
    }
};

// Named trainable (or frozen) tensor with Adam state. `trainable` and the
// tensor's requires_grad flag move together.
struct Parameter {
    std::string name;
    Tensor value;
    bool trainable = true;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    std::int64_t step_count = 0;

    void set_trainable(bool t) {
        trainable = t;
        value.set_requires_grad(t);
    }
};

using ParamPtr = std::shared_ptr<Parameter>;

ParamPtr make_param(std::string name, Shape shape, const InitSpec& init,
                    std::uint64_t global_seed);

// Owning list of a model's parameters. Every parameter is registered exactly
// once; duplicate names or duplicate objects are build errors.
class ParameterRegistry {
public:
    ParamPtr add(ParamPtr p);
    const std::vector<ParamPtr>& all() const { return params_; }
    ParamPtr find(const std::string& name) const;
    std::size_t size() const { return params_.size(); }
    void zero_grad();

private:
    std::vector<ParamPtr> params_;
    std::unordered_map<std::string, std::size_t> by_name_;
};

}  // namespace somnus

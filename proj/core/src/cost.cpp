#include "somnus/cost.hpp"

#include <nlohmann/json.hpp>

namespace somnus {

long long CostReport::params_trainable() const {
    long long t = 0;
    for (const auto& i : items) t += i.params_trainable;
    return t;
}

long long CostReport::params_frozen() const {
    long long t = 0;
    for (const auto& i : items) t += i.params_frozen;
    return t;
}

long long CostReport::params_total() const {
    return params_trainable() + params_frozen();
}

long long CostReport::flops_total() const {
    long long t = 0;
    for (const auto& i : items) t += i.flops;
    return t;
}

std::string CostReport::to_json() const {
    nlohmann::ordered_json j;
    j["model"] = model_id;
    j["flops_convention"] = "1 MAC = 2 FLOPs; bias adds and nonlinearities counted";
    j["params_trainable"] = params_trainable();
    j["params_frozen"] = params_frozen();
    j["params_total"] = params_total();
    j["flops_per_forward"] = flops_total();
    nlohmann::ordered_json breakdown = nlohmann::ordered_json::array();
    for (const auto& i : items) {
        nlohmann::ordered_json e;
        e["name"] = i.name;
        e["params_trainable"] = i.params_trainable;
        e["params_frozen"] = i.params_frozen;
        e["flops"] = i.flops;
        breakdown.push_back(std::move(e));
    }
    j["breakdown"] = std::move(breakdown);
    return j.dump(2);
}

namespace cost {

namespace {
long long ll(std::size_t v) { return static_cast<long long>(v); }
}

long long dense_params(std::size_t in, std::size_t out, bool bias) {
    return ll(in) * ll(out) + (bias ? ll(out) : 0);
}

long long dense_flops(std::size_t in, std::size_t out, bool bias) {
    return 2 * ll(in) * ll(out) + (bias ? ll(out) : 0);
}

long long conv2d_params(std::size_t cin, std::size_t cout, std::size_t k, bool bias) {
    return ll(cout) * ll(cin) * ll(k) * ll(k) + (bias ? ll(cout) : 0);
}

long long conv2d_flops(std::size_t cin, std::size_t cout, std::size_t k,
                       std::size_t hout, std::size_t wout, bool bias) {
    const long long macs = ll(k) * ll(k) * ll(cin) * ll(cout) * ll(hout) * ll(wout);
    return 2 * macs + (bias ? ll(cout) * ll(hout) * ll(wout) : 0);
}

long long deconv2d_params(std::size_t cin, std::size_t cout, std::size_t k, bool bias) {
    return ll(cin) * ll(cout) * ll(k) * ll(k) + (bias ? ll(cout) : 0);
}

long long deconv2d_flops(std::size_t cin, std::size_t cout, std::size_t k,
                         std::size_t hin, std::size_t win, std::size_t hout,
                         std::size_t wout, bool bias) {
    const long long macs = ll(k) * ll(k) * ll(cin) * ll(cout) * ll(hin) * ll(win);
    return 2 * macs + (bias ? ll(cout) * ll(hout) * ll(wout) : 0);
}

long long lstm_params(std::size_t x, std::size_t h) {
    return 4 * ll(h) * (ll(x) + ll(h) + 1);
}

long long lstm_flops(std::size_t x, std::size_t h, std::size_t steps) {
    const long long per_step = 8 * ll(h) * (ll(x) + ll(h)) + 13 * ll(h);
    return per_step * ll(steps);
}

long long layer_norm_params(std::size_t features) { return 2 * ll(features); }

long long layer_norm_flops(std::size_t rows, std::size_t features) {
    return ll(rows) * (8 * ll(features) + 2);
}

long long relu_flops(std::size_t n) { return ll(n); }

long long avg_pool2d_flops(std::size_t c, std::size_t h, std::size_t w) {
    return ll(c) * (ll(h) * ll(w) + 1);
}

long long mean_time_flops(std::size_t t, std::size_t h) {
    return ll(h) * (ll(t) + 1);
}

long long softmax_flops(std::size_t rows, std::size_t features) {
    return ll(rows) * 4 * ll(features);
}

long long argmax_flops(std::size_t rows, std::size_t features) {
    return ll(rows) * ll(features);
}

long long embedding_params(std::size_t vocab, std::size_t dim) {
    return ll(vocab) * ll(dim);
}

}  // namespace cost

}  // namespace somnus

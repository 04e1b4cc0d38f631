#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace somnus {

// One breakdown entry of a cost report. FLOPs are analytic counts for a
// single-sample forward pass under the convention documented below.
struct LayerCost {
    std::string name;
    long long params_trainable = 0;
    long long params_frozen = 0;
    long long flops = 0;
};

struct CostReport {
    std::string model_id;
    std::vector<LayerCost> items;

    long long params_trainable() const;
    long long params_frozen() const;
    long long params_total() const;
    long long flops_total() const;

    // JSON with a fixed key order, suitable for golden-file comparison.
    std::string to_json() const;
};

// FLOPs convention: one multiply-accumulate counts as 2 FLOPs, bias adds and
// pointwise nonlinearities count as 1 FLOP per element. Conventions differ
// across the literature, so ours is pinned here and in the report output.
namespace cost {

long long dense_params(std::size_t in, std::size_t out, bool bias = true);
long long dense_flops(std::size_t in, std::size_t out, bool bias = true);

long long conv2d_params(std::size_t cin, std::size_t cout, std::size_t k,
                        bool bias = true);
long long conv2d_flops(std::size_t cin, std::size_t cout, std::size_t k,
                       std::size_t hout, std::size_t wout, bool bias = true);

long long deconv2d_params(std::size_t cin, std::size_t cout, std::size_t k,
                          bool bias = true);
long long deconv2d_flops(std::size_t cin, std::size_t cout, std::size_t k,
                         std::size_t hin, std::size_t win, std::size_t hout,
                         std::size_t wout, bool bias = true);

// Fused-gate LSTM: params 4H(X+H+1); per step 8H(X+H) matmul FLOPs plus
// 4H bias adds, 5H gate nonlinearities and 4H cell/output elementwise ops.
long long lstm_params(std::size_t x, std::size_t h);
long long lstm_flops(std::size_t x, std::size_t h, std::size_t steps);

long long layer_norm_params(std::size_t features);
long long layer_norm_flops(std::size_t rows, std::size_t features);

long long relu_flops(std::size_t n);
long long avg_pool2d_flops(std::size_t c, std::size_t h, std::size_t w);
long long mean_time_flops(std::size_t t, std::size_t h);
long long softmax_flops(std::size_t rows, std::size_t features);
long long argmax_flops(std::size_t rows, std::size_t features);
long long embedding_params(std::size_t vocab, std::size_t dim);

}  // namespace cost

}  // namespace somnus

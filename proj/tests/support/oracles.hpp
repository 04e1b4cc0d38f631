#pragma once

// Independent reference implementations used as test oracles. These are
// deliberately written against the math, not against the library code they
// check, and must stay that way.

#include <cmath>
#include <cstddef>
#include <vector>

#include "somnus/rng.hpp"
#include "somnus/tensor.hpp"

namespace oracle {

// Six-loop reference cross-correlation with zero padding.
inline std::vector<double> conv2d(const std::vector<double>& x, std::size_t n,
                                  std::size_t ci, std::size_t h, std::size_t w,
                                  const std::vector<double>& kern, std::size_t co,
                                  std::size_t k, const std::vector<double>& bias,
                                  long stride, long pad, std::size_t& ho,
                                  std::size_t& wo) {
    ho = static_cast<std::size_t>((static_cast<long>(h) + 2 * pad - static_cast<long>(k)) / stride + 1);
    wo = static_cast<std::size_t>((static_cast<long>(w) + 2 * pad - static_cast<long>(k)) / stride + 1);
    std::vector<double> out(n * co * ho * wo, 0.0);
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t oc = 0; oc < co; ++oc)
            for (std::size_t oh = 0; oh < ho; ++oh)
                for (std::size_t ow = 0; ow < wo; ++ow) {
                    double acc = bias[oc];
                    for (std::size_t ic = 0; ic < ci; ++ic)
                        for (std::size_t kh = 0; kh < k; ++kh)
                            for (std::size_t kw = 0; kw < k; ++kw) {
                                const long ih = static_cast<long>(oh) * stride - pad + static_cast<long>(kh);
                                const long iw = static_cast<long>(ow) * stride - pad + static_cast<long>(kw);
                                if (ih < 0 || iw < 0 || ih >= static_cast<long>(h) ||
                                    iw >= static_cast<long>(w))
                                    continue;
                                acc += x[((in * ci + ic) * h + ih) * w + iw] *
                                       kern[((oc * ci + ic) * k + kh) * k + kw];
                            }
                    out[((in * co + oc) * ho + oh) * wo + ow] = acc;
                }
    return out;
}

// Reference transposed convolution via direct gather. Weights are (Ci,Co,K,K).
inline std::vector<double> deconv2d(const std::vector<double>& x, std::size_t n,
                                    std::size_t ci, std::size_t h, std::size_t w,
                                    const std::vector<double>& kern, std::size_t co,
                                    std::size_t k, const std::vector<double>& bias,
                                    long stride, long pad, std::size_t& ho,
                                    std::size_t& wo) {
    ho = static_cast<std::size_t>((static_cast<long>(h) - 1) * stride - 2 * pad + static_cast<long>(k));
    wo = static_cast<std::size_t>((static_cast<long>(w) - 1) * stride - 2 * pad + static_cast<long>(k));
    std::vector<double> out(n * co * ho * wo, 0.0);
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t oc = 0; oc < co; ++oc)
            for (std::size_t oh = 0; oh < ho; ++oh)
                for (std::size_t ow = 0; ow < wo; ++ow) {
                    double acc = bias[oc];
                    for (std::size_t ic = 0; ic < ci; ++ic)
                        for (std::size_t kh = 0; kh < k; ++kh)
                            for (std::size_t kw = 0; kw < k; ++kw) {
                                const long num_h = static_cast<long>(oh) + pad - static_cast<long>(kh);
                                const long num_w = static_cast<long>(ow) + pad - static_cast<long>(kw);
                                if (num_h < 0 || num_w < 0 || num_h % stride || num_w % stride) continue;
                                const long ih = num_h / stride;
                                const long iw = num_w / stride;
                                if (ih >= static_cast<long>(h) || iw >= static_cast<long>(w)) continue;
                                acc += x[((in * ci + ic) * h + ih) * w + iw] *
                                       kern[((ic * co + oc) * k + kh) * k + kw];
                            }
                    out[((in * co + oc) * ho + oh) * wo + ow] = acc;
                }
    return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Gate-by-gate scalar LSTM step for one batch row. Weight layouts match the
// library convention: w_x (X,4H), w_h (H,4H), b (4H), gate order i,f,g,o.
inline void lstm_step(const std::vector<double>& x, const std::vector<double>& h_prev,
                      const std::vector<double>& c_prev,
                      const std::vector<double>& w_x, const std::vector<double>& w_h,
                      const std::vector<double>& b, std::size_t hidden,
                      std::vector<double>& h_out, std::vector<double>& c_out) {
    const std::size_t xdim = x.size();
    h_out.assign(hidden, 0.0);
    c_out.assign(hidden, 0.0);
    for (std::size_t j = 0; j < hidden; ++j) {
        double gi = b[j], gf = b[hidden + j], gg = b[2 * hidden + j], go = b[3 * hidden + j];
        for (std::size_t a = 0; a < xdim; ++a) {
            gi += x[a] * w_x[a * 4 * hidden + j];
            gf += x[a] * w_x[a * 4 * hidden + hidden + j];
            gg += x[a] * w_x[a * 4 * hidden + 2 * hidden + j];
            go += x[a] * w_x[a * 4 * hidden + 3 * hidden + j];
        }
        for (std::size_t a = 0; a < hidden; ++a) {
            gi += h_prev[a] * w_h[a * 4 * hidden + j];
            gf += h_prev[a] * w_h[a * 4 * hidden + hidden + j];
            gg += h_prev[a] * w_h[a * 4 * hidden + 2 * hidden + j];
            go += h_prev[a] * w_h[a * 4 * hidden + 3 * hidden + j];
        }
        const double i = sigmoid(gi), f = sigmoid(gf), g = std::tanh(gg), o = sigmoid(go);
        c_out[j] = f * c_prev[j] + i * g;
        h_out[j] = o * std::tanh(c_out[j]);
    }
}

// Straight-from-the-formula ADAM recurrence for one scalar.
struct AdamScalar {
    double m = 0.0, v = 0.0;
    long t = 0;

    double step(double theta, double g, double lr, double b1, double b2, double sigma) {
        t += 1;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        const double m_hat = m / (1.0 - std::pow(b1, static_cast<double>(t)));
        const double v_hat = v / (1.0 - std::pow(b2, static_cast<double>(t)));
        return theta - lr * m_hat / (std::sqrt(v_hat) + sigma);
    }
};

inline somnus::Tensor random_tensor(somnus::Shape shape, somnus::Rng& rng,
                                    double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(somnus::numel(shape));
    for (double& x : v) x = rng.uniform(lo, hi);
    return somnus::Tensor(std::move(shape), std::move(v));
}

}  // namespace oracle

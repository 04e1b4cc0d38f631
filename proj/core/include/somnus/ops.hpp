#pragma once

#include <utility>

#include "somnus/tensor.hpp"

namespace somnus {

// Elementwise ops. Shapes must match exactly; there is no broadcasting
// anywhere in this library — adapters make every shape explicit.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

Tensor relu(const Tensor& x);  // subgradient at 0 is 0
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

// (N,K) x (K,M) -> (N,M)
Tensor matmul(const Tensor& a, const Tensor& b);

// x: (N,K), b: (K); adds b to every row. The explicit-shape stand-in for
// broadcast bias addition.
Tensor add_bias_rows(const Tensor& x, const Tensor& b);

// Cross-correlation. x: (N,C_in,H,W), w: (C_out,C_in,K,K), b: (C_out).
// Output spatial size (H + 2*padding - K) / stride + 1 must divide exactly.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int padding);

// Transposed convolution. x: (N,C_in,H,W), w: (C_in,C_out,K,K), b: (C_out).
// Output spatial size (H - 1) * stride - 2*padding + K. With bias zero and a
// conv2d's weight buffer reinterpreted, this is the exact adjoint of conv2d.
Tensor deconv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                int padding);

// Per-row normalization over `axis` to zero mean / unit variance, then an
// affine map. gain/bias must have length shape[axis].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps, std::size_t axis);

// Layer norm for feature maps: normalizes each sample's whole (C,H,W)
// volume, then applies a per-channel affine map. Batch-size independent and
// well-defined for a single channel.
Tensor layer_norm2d(const Tensor& x, const Tensor& gain, const Tensor& bias,
                    double eps);

// Numerically stabilized softmax over `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

// Index of the row maximum over `axis`; ties break to the lowest index.
// Returns an IntTensor, so no gradient ever flows through this op.
IntTensor argmax(const Tensor& x, std::size_t axis);

// Row gather from table (V,D) by ids of rank 1 or 2; grads scatter-add back
// into the looked-up rows only.
Tensor embedding_lookup(const Tensor& table, const IntTensor& ids);

// Mean negative log-softmax of the true class. logits: (N,K), labels: (N).
Tensor cross_entropy(const Tensor& logits, const IntTensor& labels);

// Mean squared elementwise difference (scalar).
Tensor mse(const Tensor& a, const Tensor& b);

Tensor sum_all(const Tensor& x);

// (N,C,H,W) -> (N,C), mean over the spatial grid.
Tensor global_avg_pool2d(const Tensor& x);

// (B,T,H) -> (B,H), mean over time.
Tensor mean_over_time(const Tensor& x);

Tensor reshape(const Tensor& x, Shape new_shape);

// Column slicing / concatenation on rank-2 tensors.
Tensor slice_cols(const Tensor& x, std::size_t lo, std::size_t hi);
Tensor concat_cols(const Tensor& a, const Tensor& b);

// (B,T,X) -> (B,X) at time t, and its inverse over a full sequence.
Tensor slice_time(const Tensor& x, std::size_t t);
Tensor stack_time(const std::vector<Tensor>& steps);

struct LstmWeights {
    Tensor w_x;  // (X, 4H), gate order i,f,g,o
    Tensor w_h;  // (H, 4H)
    Tensor b;    // (4H)
};

// Single LSTM step. Returns (h_t, c_t).
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x_t, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmWeights& w);

struct LstmSeqOut {
    Tensor seq;  // (B,T,H)
    Tensor h_last;
    Tensor c_last;
};

// Unrolls lstm_cell over a (B,T,X) sequence from zero initial state.
LstmSeqOut lstm_seq(const Tensor& x, const LstmWeights& w, std::size_t hidden);

// Unrolls lstm_cell feeding the same (B,X) input every step, from a given
// initial state. Used by sequence decoders conditioned on a latent vector.
LstmSeqOut lstm_unroll_const_input(const Tensor& x_const, std::size_t steps,
                                   const LstmWeights& w, const Tensor& h0,
                                   const Tensor& c0);

namespace debug {

// Kink monitors: smallest |x| seen at any relu input and smallest top-2
// margin seen at any argmax, since the last reset. Gradient-check harnesses
// use these to nudge samples away from non-differentiable points.
double min_abs_relu_input();
double min_argmax_margin();
void reset_kink_monitors();

}  // namespace debug

}  // namespace somnus

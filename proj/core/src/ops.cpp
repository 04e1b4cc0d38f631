#include "somnus/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace somnus {

namespace {

thread_local double g_min_relu_input = std::numeric_limits<double>::infinity();
thread_local double g_min_argmax_margin = std::numeric_limits<double>::infinity();

using detail::accumulate_grad;
using detail::Node;
using detail::TensorImpl;

std::shared_ptr<Node> node_for(const char* op,
                               std::vector<std::shared_ptr<TensorImpl>> inputs,
                               std::function<void(const TensorImpl&)> bw) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in->requires_grad;
    if (!needs) return nullptr;
    auto n = std::make_shared<Node>();
    n->op = op;
    n->inputs = std::move(inputs);
    n->backward = std::move(bw);
    return n;
}

// Decomposes a shape into (outer, dim, inner) around `axis` so axis-wise ops
// can walk rows with a single triple loop.
struct RowWalk {
    std::size_t outer = 1, dim = 1, inner = 1;
};

RowWalk row_walk(const char* op, const Shape& s, std::size_t axis) {
    if (axis >= s.size()) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for " + shape_str(s));
    }
    RowWalk w;
    for (std::size_t i = 0; i < axis; ++i) w.outer *= s[i];
    w.dim = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) w.inner *= s[i];
    return w;
}

}  // namespace

namespace debug {

double min_abs_relu_input() { return g_min_relu_input; }
double min_argmax_margin() { return g_min_argmax_margin; }

void reset_kink_monitors() {
    g_min_relu_input = std::numeric_limits<double>::infinity();
    g_min_argmax_margin = std::numeric_limits<double>::infinity();
}

}  // namespace debug

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a.shape(), b.shape());
    std::vector<double> out(a.numel());
    const auto& av = a.data();
    const auto& bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    auto node = node_for("add", {a.impl(), b.impl()}, [](const TensorImpl& o) {
        accumulate_grad(o.node->inputs[0], o.grad.data(), o.grad.size());
        accumulate_grad(o.node->inputs[1], o.grad.data(), o.grad.size());
    });
    return Tensor::make_result(a.shape(), std::move(out), std::move(node));
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a.shape(), b.shape());
    std::vector<double> out(a.numel());
    const auto& av = a.data();
    const auto& bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    auto node = node_for("sub", {a.impl(), b.impl()}, [](const TensorImpl& o) {
        accumulate_grad(o.node->inputs[0], o.grad.data(), o.grad.size());
        std::vector<double> neg(o.grad.size());
        for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -o.grad[i];
        accumulate_grad(o.node->inputs[1], neg.data(), neg.size());
    });
    return Tensor::make_result(a.shape(), std::move(out), std::move(node));
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a.shape(), b.shape());
    std::vector<double> out(a.numel());
    const auto& av = a.data();
    const auto& bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    auto node = node_for("mul", {a.impl(), b.impl()}, [](const TensorImpl& o) {
        const auto& x = o.node->inputs[0]->values;
        const auto& y = o.node->inputs[1]->values;
        std::vector<double> g(o.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[i] * y[i];
        accumulate_grad(o.node->inputs[0], g.data(), g.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[i] * x[i];
        accumulate_grad(o.node->inputs[1], g.data(), g.size());
    });
    return Tensor::make_result(a.shape(), std::move(out), std::move(node));
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    const auto& av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
    auto node = node_for("scale", {a.impl()}, [c](const TensorImpl& o) {
        std::vector<double> g(o.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[i] * c;
        accumulate_grad(o.node->inputs[0], g.data(), g.size());
    });
    return Tensor::make_result(a.shape(), std::move(out), std::move(node));
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.numel());
    const auto& xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        g_min_relu_input = std::min(g_min_relu_input, std::abs(xv[i]));
        out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    }
    auto node = node_for("relu", {x.impl()}, [](const TensorImpl& o) {
        const auto& xin = o.node->inputs[0]->values;
        std::vector<double> g(o.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] = xin[i] > 0.0 ? o.grad[i] : 0.0;
        }
        accumulate_grad(o.node->inputs[0], g.data(), g.size());
    });
    return Tensor::make_result(x.shape(), std::move(out), std::move(node));
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.numel());
    const auto& xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
    auto node = node_for("sigmoid", {x.impl()}, [y = out](const TensorImpl& o) {
        std::vector<double> g(o.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[i] * y[i] * (1.0 - y[i]);
        accumulate_grad(o.node->inputs[0], g.data(), g.size());
    });
    return Tensor::make_result(x.shape(), std::move(out), std::move(node));
}

Tensor tanh(const Tensor& x) {
    std::vector<double> out(x.numel());
    const auto& xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
    auto node = node_for("tanh", {x.impl()}, [y = out](const TensorImpl& o) {
        std::vector<double> g(o.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[i] * (1.0 - y[i] * y[i]);
        accumulate_grad(o.node->inputs[0], g.data(), g.size());
    });
    return Tensor::make_result(x.shape(), std::move(out), std::move(node));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", a.shape(), 2);
    require_rank("matmul", b.shape(), 2);
    const std::size_t n = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], m = b.shape()[1];
    if (k != k2) {
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
    }
    std::vector<double> out(n * m, 0.0);
    const double* av = a.data().data();
    const double* bv = b.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            const double* brow = bv + p * m;
            double* orow = out.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
        }
    }
    auto node = node_for("matmul", {a.impl(), b.impl()}, [n, k, m](const TensorImpl& o) {
        const auto& av2 = o.node->inputs[0]->values;
        const auto& bv2 = o.node->inputs[1]->values;
        std::vector<double> ga(n * k, 0.0);
        std::vector<double> gb(k * m, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                const double go = o.grad[i * m + j];
                if (go == 0.0) continue;
                for (std::size_t p = 0; p < k; ++p) {
                    ga[i * k + p] += go * bv2[p * m + j];
                    gb[p * m + j] += av2[i * k + p] * go;
                }
            }
        }
        accumulate_grad(o.node->inputs[0], ga.data(), ga.size());
        accumulate_grad(o.node->inputs[1], gb.data(), gb.size());
    });
    return Tensor::make_result({n, m}, std::move(out), std::move(node));
}

Tensor add_bias_rows(const Tensor& x, const Tensor& b) {
    require_rank("add_bias_rows", x.shape(), 2);
    require_rank("add_bias_rows", b.shape(), 1);
    const std::size_t n = x.shape()[0], k = x.shape()[1];
    if (b.shape()[0] != k) {
        throw ShapeError("add_bias_rows: bias length " + shape_str(b.shape()) +
                         " does not match row width of " + shape_str(x.shape()));
    }
    std::vector<double> out(n * k);
    const auto& xv = x.data();
    const auto& bv = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] = xv[i * k + j] + bv[j];
    }
    auto node = node_for("add_bias_rows", {x.impl(), b.impl()}, [n, k](const TensorImpl& o) {
        accumulate_grad(o.node->inputs[0], o.grad.data(), o.grad.size());
        std::vector<double> gb(k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < k; ++j) gb[j] += o.grad[i * k + j];
        }
        accumulate_grad(o.node->inputs[1], gb.data(), gb.size());
    });
    return Tensor::make_result(x.shape(), std::move(out), std::move(node));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps, std::size_t axis) {
    const auto w = row_walk("layer_norm", x.shape(), axis);
    if (w.dim == 0) throw ShapeError("layer_norm: zero-length feature axis");
    require_rank("layer_norm", gain.shape(), 1);
    require_rank("layer_norm", bias.shape(), 1);
    if (gain.shape()[0] != w.dim || bias.shape()[0] != w.dim) {
        throw ShapeError("layer_norm: gain/bias length must equal feature size " +
                         std::to_string(w.dim));
    }
    const auto& xv = x.data();
    const auto& gv = gain.data();
    const auto& bv = bias.data();
    std::vector<double> out(x.numel());
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(w.outer * w.inner);
    for (std::size_t o = 0; o < w.outer; ++o) {
        for (std::size_t i = 0; i < w.inner; ++i) {
            const std::size_t base = o * w.dim * w.inner + i;
            double mean = 0.0;
            for (std::size_t f = 0; f < w.dim; ++f) mean += xv[base + f * w.inner];
            mean /= static_cast<double>(w.dim);
            double var = 0.0;
            for (std::size_t f = 0; f < w.dim; ++f) {
                const double d = xv[base + f * w.inner] - mean;
                var += d * d;
            }
            var /= static_cast<double>(w.dim);
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std[o * w.inner + i] = is;
            for (std::size_t f = 0; f < w.dim; ++f) {
                const std::size_t idx = base + f * w.inner;
                const double xh = (xv[idx] - mean) * is;
                xhat[idx] = xh;
                out[idx] = xh * gv[f] + bv[f];
            }
        }
    }
    auto node = node_for(
        "layer_norm", {x.impl(), gain.impl(), bias.impl()},
        [w, xhat = std::move(xhat), inv_std = std::move(inv_std)](const TensorImpl& o) {
            const auto& gv2 = o.node->inputs[1]->values;
            std::vector<double> gx(o.grad.size());
            std::vector<double> ggain(w.dim, 0.0);
            std::vector<double> gbias(w.dim, 0.0);
            const double fdim = static_cast<double>(w.dim);
            for (std::size_t ou = 0; ou < w.outer; ++ou) {
                for (std::size_t i = 0; i < w.inner; ++i) {
                    const std::size_t base = ou * w.dim * w.inner + i;
                    const double is = inv_std[ou * w.inner + i];
                    double mean_q = 0.0, mean_qx = 0.0;
                    for (std::size_t f = 0; f < w.dim; ++f) {
                        const std::size_t idx = base + f * w.inner;
                        const double q = o.grad[idx] * gv2[f];
                        mean_q += q;
                        mean_qx += q * xhat[idx];
                        ggain[f] += o.grad[idx] * xhat[idx];
                        gbias[f] += o.grad[idx];
                    }
                    mean_q /= fdim;
                    mean_qx /= fdim;
                    for (std::size_t f = 0; f < w.dim; ++f) {
                        const std::size_t idx = base + f * w.inner;
                        const double q = o.grad[idx] * gv2[f];
                        gx[idx] = is * (q - mean_q - xhat[idx] * mean_qx);
                    }
                }
            }
            accumulate_grad(o.node->inputs[0], gx.data(), gx.size());
            accumulate_grad(o.node->inputs[1], ggain.data(), ggain.size());
            accumulate_grad(o.node->inputs[2], gbias.data(), gbias.size());
        });
    return Tensor::make_result(x.shape(), std::move(out), std::move(node));
}

Tensor layer_norm2d(const Tensor& x, const Tensor& gain, const Tensor& bias,
                    double eps) {
    require_rank("layer_norm2d", x.shape(), 4);
    const std::size_t n = x.shape()[0], c = x.shape()[1];
    const std::size_t hw = x.shape()[2] * x.shape()[3];
    const std::size_t vol = c * hw;
    if (vol == 0) throw ShapeError("layer_norm2d: empty feature volume");
    require_rank("layer_norm2d", gain.shape(), 1);
    require_rank("layer_norm2d", bias.shape(), 1);
    if (gain.shape()[0] != c || bias.shape()[0] != c) {
        throw ShapeError("layer_norm2d: gain/bias length must equal channel count " +
                         std::to_string(c));
    }
    const auto& xv = x.data();
    const auto& gv = gain.data();
    const auto& bv = bias.data();
    std::vector<double> out(x.numel());
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* sample = xv.data() + i * vol;
        double mean = 0.0;
        for (std::size_t j = 0; j < vol; ++j) mean += sample[j];
        mean /= static_cast<double>(vol);
        double var = 0.0;
        for (std::size_t j = 0; j < vol; ++j) {
            const double d = sample[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(vol);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t j = 0; j < hw; ++j) {
                const std::size_t idx = i * vol + ch * hw + j;
                const double xh = (xv[idx] - mean) * is;
                xhat[idx] = xh;
                out[idx] = xh * gv[ch] + bv[ch];
            }
        }
    }
    auto node = node_for(
        "layer_norm2d", {x.impl(), gain.impl(), bias.impl()},
        [n, c, hw, vol, xhat = std::move(xhat),
         inv_std = std::move(inv_std)](const TensorImpl& o) {
            const auto& gv2 = o.node->inputs[1]->values;
            std::vector<double> gx(o.grad.size());
            std::vector<double> ggain(c, 0.0);
            std::vector<double> gbias(c, 0.0);
            const double fvol = static_cast<double>(vol);
            for (std::size_t i = 0; i < n; ++i) {
                double mean_q = 0.0, mean_qx = 0.0;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    for (std::size_t j = 0; j < hw; ++j) {
                        const std::size_t idx = i * vol + ch * hw + j;
                        const double q = o.grad[idx] * gv2[ch];
                        mean_q += q;
                        mean_qx += q * xhat[idx];
                        ggain[ch] += o.grad[idx] * xhat[idx];
                        gbias[ch] += o.grad[idx];
                    }
                }
                mean_q /= fvol;
                mean_qx /= fvol;
                const double is = inv_std[i];
                for (std::size_t ch = 0; ch < c; ++ch) {
                    for (std::size_t j = 0; j < hw; ++j) {
                        const std::size_t idx = i * vol + ch * hw + j;
                        const double q = o.grad[idx] * gv2[ch];
                        gx[idx] = is * (q - mean_q - xhat[idx] * mean_qx);
                    }
                }
            }
            accumulate_grad(o.node->inputs[0], gx.data(), gx.size());
            accumulate_grad(o.node->inputs[1], ggain.data(), ggain.size());
            accumulate_grad(o.node->inputs[2], gbias.data(), gbias.size());
        });
    return Tensor::make_result(x.shape(), std::move(out), std::move(node));
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    const auto w = row_walk("softmax", x.shape(), axis);
    if (w.dim == 0) throw ShapeError("softmax: zero-length axis");
    const auto& xv = x.data();
    std::vector<double> out(x.numel());
    for (std::size_t o = 0; o < w.outer; ++o) {
        for (std::size_t i = 0; i < w.inner; ++i) {
            const std::size_t base = o * w.dim * w.inner + i;
            double m = -std::numeric_limits<double>::infinity();
            for (std::size_t f = 0; f < w.dim; ++f) m = std::max(m, xv[base + f * w.inner]);
            double s = 0.0;
            for (std::size_t f = 0; f < w.dim; ++f) {
                const std::size_t idx = base + f * w.inner;
                out[idx] = std::exp(xv[idx] - m);
                s += out[idx];
            }
            for (std::size_t f = 0; f < w.dim; ++f) out[base + f * w.inner] /= s;
        }
    }
    auto node = node_for("softmax", {x.impl()}, [w, y = out](const TensorImpl& o) {
        std::vector<double> gx(o.grad.size());
        for (std::size_t ou = 0; ou < w.outer; ++ou) {
            for (std::size_t i = 0; i < w.inner; ++i) {
                const std::size_t base = ou * w.dim * w.inner + i;
                double dot = 0.0;
                for (std::size_t f = 0; f < w.dim; ++f) {
                    const std::size_t idx = base + f * w.inner;
                    dot += o.grad[idx] * y[idx];
                }
                for (std::size_t f = 0; f < w.dim; ++f) {
                    const std::size_t idx = base + f * w.inner;
                    gx[idx] = y[idx] * (o.grad[idx] - dot);
                }
            }
        }
        accumulate_grad(o.node->inputs[0], gx.data(), gx.size());
    });
    return Tensor::make_result(x.shape(), std::move(out), std::move(node));
}

IntTensor argmax(const Tensor& x, std::size_t axis) {
    const auto w = row_walk("argmax", x.shape(), axis);
    if (w.dim == 0) throw ShapeError("argmax: empty axis");
    const auto& xv = x.data();
    Shape out_shape;
    for (std::size_t i = 0; i < x.rank(); ++i) {
        if (i != axis) out_shape.push_back(x.shape()[i]);
    }
    if (out_shape.empty()) out_shape.push_back(1);
    std::vector<std::int64_t> out;
    out.reserve(w.outer * w.inner);
    for (std::size_t o = 0; o < w.outer; ++o) {
        for (std::size_t i = 0; i < w.inner; ++i) {
            const std::size_t base = o * w.dim * w.inner + i;
            std::size_t best = 0;
            double best_v = xv[base];
            double second = -std::numeric_limits<double>::infinity();
            for (std::size_t f = 1; f < w.dim; ++f) {
                const double v = xv[base + f * w.inner];
                if (v > best_v) {
                    second = best_v;
                    best_v = v;
                    best = f;
                } else {
                    second = std::max(second, v);
                }
            }
            if (w.dim > 1) {
                g_min_argmax_margin = std::min(g_min_argmax_margin, best_v - second);
            }
            out.push_back(static_cast<std::int64_t>(best));
        }
    }
    // IntTensor output: deliberately severed from the graph (stop-gradient).
    return IntTensor(std::move(out_shape), std::move(out));
}

Tensor embedding_lookup(const Tensor& table, const IntTensor& ids) {
    require_rank("embedding_lookup", table.shape(), 2);
    if (ids.rank() != 1 && ids.rank() != 2) {
        throw ShapeError("embedding_lookup: ids must be rank 1 or 2, got " +
                         shape_str(ids.shape()));
    }
    const std::size_t v = table.shape()[0], d = table.shape()[1];
    const auto& tv = table.data();
    const auto& iv = ids.data();
    for (std::size_t i = 0; i < iv.size(); ++i) {
        if (iv[i] < 0 || static_cast<std::size_t>(iv[i]) >= v) {
            throw ValueError("embedding_lookup: id " + std::to_string(iv[i]) +
                             " out of range [0," + std::to_string(v) + ") at position " +
                             std::to_string(i));
        }
    }
    Shape out_shape = ids.shape();
    out_shape.push_back(d);
    std::vector<double> out(iv.size() * d);
    for (std::size_t i = 0; i < iv.size(); ++i) {
        const double* row = tv.data() + static_cast<std::size_t>(iv[i]) * d;
        std::copy(row, row + d, out.begin() + i * d);
    }
    auto node = node_for("embedding_lookup", {table.impl()},
                         [ids_copy = iv, v, d](const TensorImpl& o) {
                             std::vector<double> gt(v * d, 0.0);
                             for (std::size_t i = 0; i < ids_copy.size(); ++i) {
                                 double* row = gt.data() + static_cast<std::size_t>(ids_copy[i]) * d;
                                 const double* g = o.grad.data() + i * d;
                                 for (std::size_t j = 0; j < d; ++j) row[j] += g[j];
                             }
                             accumulate_grad(o.node->inputs[0], gt.data(), gt.size());
                         });
    return Tensor::make_result(std::move(out_shape), std::move(out), std::move(node));
}

Tensor cross_entropy(const Tensor& logits, const IntTensor& labels) {
    require_rank("cross_entropy", logits.shape(), 2);
    require_rank("cross_entropy", labels.shape(), 1);
    const std::size_t n = logits.shape()[0], k = logits.shape()[1];
    if (labels.shape()[0] != n) {
        throw ShapeError("cross_entropy: " + std::to_string(n) + " rows but " +
                         std::to_string(labels.numel()) + " labels");
    }
    const auto& zv = logits.data();
    const auto& yv = labels.data();
    for (std::size_t i = 0; i < n; ++i) {
        if (yv[i] < 0 || static_cast<std::size_t>(yv[i]) >= k) {
            throw ValueError("cross_entropy: label " + std::to_string(yv[i]) +
                             " out of range [0," + std::to_string(k) + ") at row " +
                             std::to_string(i));
        }
    }
    std::vector<double> probs(n * k);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = zv.data() + i * k;
        double m = row[0];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            probs[i * k + j] = std::exp(row[j] - m);
            s += probs[i * k + j];
        }
        for (std::size_t j = 0; j < k; ++j) probs[i * k + j] /= s;
        loss += std::log(s) - (row[static_cast<std::size_t>(yv[i])] - m);
    }
    loss /= static_cast<double>(n);
    auto node = node_for("cross_entropy", {logits.impl()},
                         [probs = std::move(probs), labels_copy = yv, n, k](const TensorImpl& o) {
                             const double go = o.grad[0] / static_cast<double>(n);
                             std::vector<double> g(n * k);
                             for (std::size_t i = 0; i < n; ++i) {
                                 for (std::size_t j = 0; j < k; ++j) {
                                     double p = probs[i * k + j];
                                     if (static_cast<std::size_t>(labels_copy[i]) == j) p -= 1.0;
                                     g[i * k + j] = go * p;
                                 }
                             }
                             accumulate_grad(o.node->inputs[0], g.data(), g.size());
                         });
    return Tensor::make_result({1}, {loss}, std::move(node));
}

Tensor mse(const Tensor& a, const Tensor& b) {
    require_same_shape("mse", a.shape(), b.shape());
    const auto& av = a.data();
    const auto& bv = b.data();
    const double inv_n = 1.0 / static_cast<double>(a.numel());
    double loss = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        loss += d * d;
    }
    loss *= inv_n;
    auto node = node_for("mse", {a.impl(), b.impl()}, [inv_n](const TensorImpl& o) {
        const auto& x = o.node->inputs[0]->values;
        const auto& y = o.node->inputs[1]->values;
        const double go = o.grad[0];
        std::vector<double> g(x.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = go * 2.0 * inv_n * (x[i] - y[i]);
        accumulate_grad(o.node->inputs[0], g.data(), g.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = -g[i];
        accumulate_grad(o.node->inputs[1], g.data(), g.size());
    });
    return Tensor::make_result({1}, {loss}, std::move(node));
}

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    auto node = node_for("sum_all", {x.impl()}, [](const TensorImpl& o) {
        std::vector<double> g(o.node->inputs[0]->values.size(), o.grad[0]);
        accumulate_grad(o.node->inputs[0], g.data(), g.size());
    });
    return Tensor::make_result({1}, {s}, std::move(node));
}

Tensor global_avg_pool2d(const Tensor& x) {
    require_rank("global_avg_pool2d", x.shape(), 4);
    const std::size_t n = x.shape()[0], c = x.shape()[1];
    const std::size_t hw = x.shape()[2] * x.shape()[3];
    const auto& xv = x.data();
    std::vector<double> out(n * c, 0.0);
    for (std::size_t i = 0; i < n * c; ++i) {
        const double* base = xv.data() + i * hw;
        double s = 0.0;
        for (std::size_t j = 0; j < hw; ++j) s += base[j];
        out[i] = s / static_cast<double>(hw);
    }
    auto node = node_for("global_avg_pool2d", {x.impl()}, [n, c, hw](const TensorImpl& o) {
        std::vector<double> g(n * c * hw);
        const double inv = 1.0 / static_cast<double>(hw);
        for (std::size_t i = 0; i < n * c; ++i) {
            for (std::size_t j = 0; j < hw; ++j) g[i * hw + j] = o.grad[i] * inv;
        }
        accumulate_grad(o.node->inputs[0], g.data(), g.size());
    });
    return Tensor::make_result({n, c}, std::move(out), std::move(node));
}

Tensor mean_over_time(const Tensor& x) {
    require_rank("mean_over_time", x.shape(), 3);
    const std::size_t b = x.shape()[0], t = x.shape()[1], h = x.shape()[2];
    const auto& xv = x.data();
    std::vector<double> out(b * h, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t s = 0; s < t; ++s) {
            const double* row = xv.data() + (i * t + s) * h;
            for (std::size_t j = 0; j < h; ++j) out[i * h + j] += row[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(t);
    for (double& v : out) v *= inv;
    auto node = node_for("mean_over_time", {x.impl()}, [b, t, h, inv](const TensorImpl& o) {
        std::vector<double> g(b * t * h);
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t s = 0; s < t; ++s) {
                for (std::size_t j = 0; j < h; ++j) {
                    g[(i * t + s) * h + j] = o.grad[i * h + j] * inv;
                }
            }
        }
        accumulate_grad(o.node->inputs[0], g.data(), g.size());
    });
    return Tensor::make_result({b, h}, std::move(out), std::move(node));
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (::somnus::numel(new_shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(new_shape));
    }
    auto node = node_for("reshape", {x.impl()}, [](const TensorImpl& o) {
        accumulate_grad(o.node->inputs[0], o.grad.data(), o.grad.size());
    });
    return Tensor::make_result(std::move(new_shape), x.data(), std::move(node));
}

Tensor slice_cols(const Tensor& x, std::size_t lo, std::size_t hi) {
    require_rank("slice_cols", x.shape(), 2);
    const std::size_t n = x.shape()[0], k = x.shape()[1];
    if (lo >= hi || hi > k) {
        throw ShapeError("slice_cols: [" + std::to_string(lo) + "," + std::to_string(hi) +
                         ") invalid for width " + std::to_string(k));
    }
    const std::size_t w = hi - lo;
    std::vector<double> out(n * w);
    const auto& xv = x.data();
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(xv.begin() + i * k + lo, xv.begin() + i * k + hi, out.begin() + i * w);
    }
    auto node = node_for("slice_cols", {x.impl()}, [n, k, lo, w](const TensorImpl& o) {
        std::vector<double> g(n * k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < w; ++j) g[i * k + lo + j] = o.grad[i * w + j];
        }
        accumulate_grad(o.node->inputs[0], g.data(), g.size());
    });
    return Tensor::make_result({n, w}, std::move(out), std::move(node));
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_rank("concat_cols", a.shape(), 2);
    require_rank("concat_cols", b.shape(), 2);
    if (a.shape()[0] != b.shape()[0]) {
        throw ShapeError("concat_cols: row counts differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
    const std::size_t n = a.shape()[0], ka = a.shape()[1], kb = b.shape()[1];
    std::vector<double> out(n * (ka + kb));
    const auto& av = a.data();
    const auto& bv = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(av.begin() + i * ka, av.begin() + (i + 1) * ka,
                  out.begin() + i * (ka + kb));
        std::copy(bv.begin() + i * kb, bv.begin() + (i + 1) * kb,
                  out.begin() + i * (ka + kb) + ka);
    }
    auto node = node_for("concat_cols", {a.impl(), b.impl()}, [n, ka, kb](const TensorImpl& o) {
        std::vector<double> ga(n * ka), gb(n * kb);
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = o.grad.data() + i * (ka + kb);
            std::copy(row, row + ka, ga.begin() + i * ka);
            std::copy(row + ka, row + ka + kb, gb.begin() + i * kb);
        }
        accumulate_grad(o.node->inputs[0], ga.data(), ga.size());
        accumulate_grad(o.node->inputs[1], gb.data(), gb.size());
    });
    return Tensor::make_result({n, ka + kb}, std::move(out), std::move(node));
}

Tensor slice_time(const Tensor& x, std::size_t t) {
    require_rank("slice_time", x.shape(), 3);
    const std::size_t b = x.shape()[0], tt = x.shape()[1], h = x.shape()[2];
    if (t >= tt) {
        throw ShapeError("slice_time: step " + std::to_string(t) + " out of range for " +
                         shape_str(x.shape()));
    }
    std::vector<double> out(b * h);
    const auto& xv = x.data();
    for (std::size_t i = 0; i < b; ++i) {
        const double* row = xv.data() + (i * tt + t) * h;
        std::copy(row, row + h, out.begin() + i * h);
    }
    auto node = node_for("slice_time", {x.impl()}, [b, tt, h, t](const TensorImpl& o) {
        std::vector<double> g(b * tt * h, 0.0);
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < h; ++j) g[(i * tt + t) * h + j] = o.grad[i * h + j];
        }
        accumulate_grad(o.node->inputs[0], g.data(), g.size());
    });
    return Tensor::make_result({b, h}, std::move(out), std::move(node));
}

Tensor stack_time(const std::vector<Tensor>& steps) {
    if (steps.empty()) throw ShapeError("stack_time: empty sequence");
    const std::size_t b = steps[0].shape()[0];
    const std::size_t h = steps[0].shape()[1];
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    for (const auto& s : steps) {
        require_rank("stack_time", s.shape(), 2);
        require_same_shape("stack_time", steps[0].shape(), s.shape());
        inputs.push_back(s.impl());
    }
    const std::size_t t = steps.size();
    std::vector<double> out(b * t * h);
    for (std::size_t s = 0; s < t; ++s) {
        const auto& sv = steps[s].data();
        for (std::size_t i = 0; i < b; ++i) {
            std::copy(sv.begin() + i * h, sv.begin() + (i + 1) * h,
                      out.begin() + (i * t + s) * h);
        }
    }
    auto node = node_for("stack_time", std::move(inputs), [b, t, h](const TensorImpl& o) {
        std::vector<double> g(b * h);
        for (std::size_t s = 0; s < t; ++s) {
            for (std::size_t i = 0; i < b; ++i) {
                const double* row = o.grad.data() + (i * t + s) * h;
                std::copy(row, row + h, g.begin() + i * h);
            }
            accumulate_grad(o.node->inputs[s], g.data(), g.size());
        }
    });
    return Tensor::make_result({b, t, h}, std::move(out), std::move(node));
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x_t, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmWeights& w) {
    require_rank("lstm_cell", x_t.shape(), 2);
    require_rank("lstm_cell", h_prev.shape(), 2);
    require_same_shape("lstm_cell", h_prev.shape(), c_prev.shape());
    const std::size_t hidden = h_prev.shape()[1];
    if (w.w_x.shape()[1] != 4 * hidden || w.w_h.shape() != Shape{hidden, 4 * hidden} ||
        w.b.shape() != Shape{4 * hidden}) {
        throw ShapeError("lstm_cell: weight shapes inconsistent with hidden size " +
                         std::to_string(hidden));
    }
    Tensor gates = add_bias_rows(add(matmul(x_t, w.w_x), matmul(h_prev, w.w_h)), w.b);
    Tensor gi = sigmoid(slice_cols(gates, 0, hidden));
    Tensor gf = sigmoid(slice_cols(gates, hidden, 2 * hidden));
    Tensor gg = tanh(slice_cols(gates, 2 * hidden, 3 * hidden));
    Tensor go = sigmoid(slice_cols(gates, 3 * hidden, 4 * hidden));
    Tensor c_t = add(mul(gf, c_prev), mul(gi, gg));
    Tensor h_t = mul(go, tanh(c_t));
    return {h_t, c_t};
}

LstmSeqOut lstm_seq(const Tensor& x, const LstmWeights& w, std::size_t hidden) {
    require_rank("lstm_seq", x.shape(), 3);
    const std::size_t b = x.shape()[0], t = x.shape()[1];
    Tensor h = Tensor::zeros({b, hidden});
    Tensor c = Tensor::zeros({b, hidden});
    std::vector<Tensor> steps;
    steps.reserve(t);
    for (std::size_t s = 0; s < t; ++s) {
        std::tie(h, c) = lstm_cell(slice_time(x, s), h, c, w);
        steps.push_back(h);
    }
    return {stack_time(steps), h, c};
}

LstmSeqOut lstm_unroll_const_input(const Tensor& x_const, std::size_t steps,
                                   const LstmWeights& w, const Tensor& h0,
                                   const Tensor& c0) {
    require_rank("lstm_unroll_const_input", x_const.shape(), 2);
    if (steps == 0) throw ShapeError("lstm_unroll_const_input: zero steps");
    Tensor h = h0;
    Tensor c = c0;
    std::vector<Tensor> outputs;
    outputs.reserve(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        std::tie(h, c) = lstm_cell(x_const, h, c, w);
        outputs.push_back(h);
    }
    return {stack_time(outputs), h, c};
}

}  // namespace somnus

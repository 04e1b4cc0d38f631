#include <algorithm>
#include <vector>

#include "somnus/ops.hpp"

namespace somnus {

namespace {

using detail::accumulate_grad;
using detail::Node;
using detail::TensorImpl;

struct ConvGeom {
    std::size_t n, ci, h, w;      // input
    std::size_t co, k;            // kernel
    std::size_t ho, wo;           // output
    long stride, pad;
};

// Inclusive output index range such that 0 <= o*stride - pad + k_off < in_size.
struct IdxRange {
    long lo, hi;
};

IdxRange valid_range(long in_size, long out_size, long stride, long pad, long k_off) {
    const long lo_num = pad - k_off;
    long lo = lo_num <= 0 ? 0 : (lo_num + stride - 1) / stride;
    const long hi_num = in_size - 1 + pad - k_off;
    long hi = hi_num < 0 ? -1 : hi_num / stride;
    return {std::max(lo, 0L), std::min(hi, out_size - 1)};
}

ConvGeom conv_geometry(const char* op, const Shape& xs, const Shape& ws,
                       const Shape& bs, int stride, int padding, bool transposed) {
    require_rank(op, xs, 4);
    require_rank(op, ws, 4);
    require_rank(op, bs, 1);
    if (stride < 1 || padding < 0) {
        throw ShapeError(std::string(op) + ": invalid stride/padding " +
                         std::to_string(stride) + "/" + std::to_string(padding));
    }
    ConvGeom g;
    g.n = xs[0];
    g.ci = xs[1];
    g.h = xs[2];
    g.w = xs[3];
    g.stride = stride;
    g.pad = padding;
    if (ws[2] != ws[3]) {
        throw ShapeError(std::string(op) + ": non-square kernel " + shape_str(ws));
    }
    g.k = ws[2];
    const std::size_t w_in = transposed ? ws[0] : ws[1];
    g.co = transposed ? ws[1] : ws[0];
    if (w_in != g.ci) {
        throw ShapeError(std::string(op) + ": input has " + std::to_string(g.ci) +
                         " channels but weights expect " + std::to_string(w_in));
    }
    if (bs[0] != g.co) {
        throw ShapeError(std::string(op) + ": bias length " + std::to_string(bs[0]) +
                         " != output channels " + std::to_string(g.co));
    }
    if (transposed) {
        const long out = static_cast<long>(g.h - 1) * stride - 2L * padding +
                         static_cast<long>(g.k);
        if (g.h < 1 || out < 1) {
            throw ShapeError(std::string(op) + ": output size " + std::to_string(out) +
                             " invalid for input " + shape_str(xs));
        }
        g.ho = static_cast<std::size_t>(out);
        const long out_w = static_cast<long>(g.w - 1) * stride - 2L * padding +
                           static_cast<long>(g.k);
        g.wo = static_cast<std::size_t>(out_w);
    } else {
        const long num_h = static_cast<long>(g.h) + 2L * padding - static_cast<long>(g.k);
        const long num_w = static_cast<long>(g.w) + 2L * padding - static_cast<long>(g.k);
        if (num_h < 0 || num_w < 0 || num_h % stride != 0 || num_w % stride != 0) {
            throw ShapeError(std::string(op) + ": geometry (" + std::to_string(g.h) + "+2*" +
                             std::to_string(padding) + "-" + std::to_string(g.k) +
                             ") does not divide by stride " + std::to_string(stride));
        }
        g.ho = static_cast<std::size_t>(num_h / stride + 1);
        g.wo = static_cast<std::size_t>(num_w / stride + 1);
    }
    return g;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int padding) {
    const ConvGeom g =
        conv_geometry("conv2d", x.shape(), w.shape(), b.shape(), stride, padding, false);
    const auto& xv = x.data();
    const auto& wv = w.data();
    const auto& bv = b.data();
    std::vector<double> out(g.n * g.co * g.ho * g.wo);
    for (std::size_t n = 0; n < g.n; ++n) {
        for (std::size_t co = 0; co < g.co; ++co) {
            double* plane = out.data() + (n * g.co + co) * g.ho * g.wo;
            std::fill(plane, plane + g.ho * g.wo, bv[co]);
            for (std::size_t ci = 0; ci < g.ci; ++ci) {
                const double* xplane = xv.data() + (n * g.ci + ci) * g.h * g.w;
                for (std::size_t kh = 0; kh < g.k; ++kh) {
                    const IdxRange rh = valid_range(g.h, g.ho, g.stride, g.pad, kh);
                    for (std::size_t kw = 0; kw < g.k; ++kw) {
                        const IdxRange rw = valid_range(g.w, g.wo, g.stride, g.pad, kw);
                        const double wval = wv[((co * g.ci + ci) * g.k + kh) * g.k + kw];
                        if (wval == 0.0) continue;
                        for (long oh = rh.lo; oh <= rh.hi; ++oh) {
                            const long ih = oh * g.stride - g.pad + static_cast<long>(kh);
                            const double* xrow = xplane + ih * g.w;
                            double* orow = plane + oh * g.wo;
                            for (long ow = rw.lo; ow <= rw.hi; ++ow) {
                                orow[ow] += wval * xrow[ow * g.stride - g.pad + kw];
                            }
                        }
                    }
                }
            }
        }
    }
    auto nd = std::make_shared<Node>();
    nd->op = "conv2d";
    nd->inputs = {x.impl(), w.impl(), b.impl()};
    nd->backward = [g](const TensorImpl& o) {
        const auto& xv2 = o.node->inputs[0]->values;
        const auto& wv2 = o.node->inputs[1]->values;
        std::vector<double> gx(xv2.size(), 0.0);
        std::vector<double> gw(wv2.size(), 0.0);
        std::vector<double> gb(g.co, 0.0);
        for (std::size_t n = 0; n < g.n; ++n) {
            for (std::size_t co = 0; co < g.co; ++co) {
                const double* gplane = o.grad.data() + (n * g.co + co) * g.ho * g.wo;
                for (std::size_t i = 0; i < g.ho * g.wo; ++i) gb[co] += gplane[i];
                for (std::size_t ci = 0; ci < g.ci; ++ci) {
                    const double* xplane = xv2.data() + (n * g.ci + ci) * g.h * g.w;
                    double* gxplane = gx.data() + (n * g.ci + ci) * g.h * g.w;
                    for (std::size_t kh = 0; kh < g.k; ++kh) {
                        const IdxRange rh = valid_range(g.h, g.ho, g.stride, g.pad, kh);
                        for (std::size_t kw = 0; kw < g.k; ++kw) {
                            const IdxRange rw = valid_range(g.w, g.wo, g.stride, g.pad, kw);
                            const std::size_t widx = ((co * g.ci + ci) * g.k + kh) * g.k + kw;
                            const double wval = wv2[widx];
                            double acc = 0.0;
                            for (long oh = rh.lo; oh <= rh.hi; ++oh) {
                                const long ih = oh * g.stride - g.pad + static_cast<long>(kh);
                                const double* grow = gplane + oh * g.wo;
                                const double* xrow = xplane + ih * g.w;
                                double* gxrow = gxplane + ih * g.w;
                                for (long ow = rw.lo; ow <= rw.hi; ++ow) {
                                    const long iw = ow * g.stride - g.pad + static_cast<long>(kw);
                                    const double go = grow[ow];
                                    gxrow[iw] += go * wval;
                                    acc += go * xrow[iw];
                                }
                            }
                            gw[widx] += acc;
                        }
                    }
                }
            }
        }
        accumulate_grad(o.node->inputs[0], gx.data(), gx.size());
        accumulate_grad(o.node->inputs[1], gw.data(), gw.size());
        accumulate_grad(o.node->inputs[2], gb.data(), gb.size());
    };
    bool needs = x.requires_grad() || w.requires_grad() || b.requires_grad();
    return Tensor::make_result({g.n, g.co, g.ho, g.wo}, std::move(out),
                               needs ? nd : nullptr);
}

Tensor deconv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                int padding) {
    const ConvGeom g =
        conv_geometry("deconv2d", x.shape(), w.shape(), b.shape(), stride, padding, true);
    const auto& xv = x.data();
    const auto& wv = w.data();
    const auto& bv = b.data();
    std::vector<double> out(g.n * g.co * g.ho * g.wo);
    for (std::size_t n = 0; n < g.n; ++n) {
        for (std::size_t co = 0; co < g.co; ++co) {
            double* plane = out.data() + (n * g.co + co) * g.ho * g.wo;
            std::fill(plane, plane + g.ho * g.wo, bv[co]);
        }
        for (std::size_t ci = 0; ci < g.ci; ++ci) {
            const double* xplane = xv.data() + (n * g.ci + ci) * g.h * g.w;
            for (std::size_t co = 0; co < g.co; ++co) {
                double* oplane = out.data() + (n * g.co + co) * g.ho * g.wo;
                for (std::size_t kh = 0; kh < g.k; ++kh) {
                    const IdxRange rh = valid_range(g.ho, g.h, g.stride, g.pad, kh);
                    for (std::size_t kw = 0; kw < g.k; ++kw) {
                        const IdxRange rw = valid_range(g.wo, g.w, g.stride, g.pad, kw);
                        const double wval = wv[((ci * g.co + co) * g.k + kh) * g.k + kw];
                        if (wval == 0.0) continue;
                        for (long ih = rh.lo; ih <= rh.hi; ++ih) {
                            const long oh = ih * g.stride - g.pad + static_cast<long>(kh);
                            const double* xrow = xplane + ih * g.w;
                            double* orow = oplane + oh * g.wo;
                            for (long iw = rw.lo; iw <= rw.hi; ++iw) {
                                orow[iw * g.stride - g.pad + kw] += wval * xrow[iw];
                            }
                        }
                    }
                }
            }
        }
    }
    auto nd = std::make_shared<Node>();
    nd->op = "deconv2d";
    nd->inputs = {x.impl(), w.impl(), b.impl()};
    nd->backward = [g](const TensorImpl& o) {
        const auto& xv2 = o.node->inputs[0]->values;
        const auto& wv2 = o.node->inputs[1]->values;
        std::vector<double> gx(xv2.size(), 0.0);
        std::vector<double> gw(wv2.size(), 0.0);
        std::vector<double> gb(g.co, 0.0);
        for (std::size_t n = 0; n < g.n; ++n) {
            for (std::size_t co = 0; co < g.co; ++co) {
                const double* gplane = o.grad.data() + (n * g.co + co) * g.ho * g.wo;
                for (std::size_t i = 0; i < g.ho * g.wo; ++i) gb[co] += gplane[i];
            }
            for (std::size_t ci = 0; ci < g.ci; ++ci) {
                const double* xplane = xv2.data() + (n * g.ci + ci) * g.h * g.w;
                double* gxplane = gx.data() + (n * g.ci + ci) * g.h * g.w;
                for (std::size_t co = 0; co < g.co; ++co) {
                    const double* gplane = o.grad.data() + (n * g.co + co) * g.ho * g.wo;
                    for (std::size_t kh = 0; kh < g.k; ++kh) {
                        const IdxRange rh = valid_range(g.ho, g.h, g.stride, g.pad, kh);
                        for (std::size_t kw = 0; kw < g.k; ++kw) {
                            const IdxRange rw = valid_range(g.wo, g.w, g.stride, g.pad, kw);
                            const std::size_t widx = ((ci * g.co + co) * g.k + kh) * g.k + kw;
                            const double wval = wv2[widx];
                            double acc = 0.0;
                            for (long ih = rh.lo; ih <= rh.hi; ++ih) {
                                const long oh = ih * g.stride - g.pad + static_cast<long>(kh);
                                const double* grow = gplane + oh * g.wo;
                                const double* xrow = xplane + ih * g.w;
                                double* gxrow = gxplane + ih * g.w;
                                for (long iw = rw.lo; iw <= rw.hi; ++iw) {
                                    const long ow = iw * g.stride - g.pad + static_cast<long>(kw);
                                    const double go = grow[ow];
                                    gxrow[iw] += go * wval;
                                    acc += go * xrow[iw];
                                }
                            }
                            gw[widx] += acc;
                        }
                    }
                }
            }
        }
        accumulate_grad(o.node->inputs[0], gx.data(), gx.size());
        accumulate_grad(o.node->inputs[1], gw.data(), gw.size());
        accumulate_grad(o.node->inputs[2], gb.data(), gb.size());
    };
    bool needs = x.requires_grad() || w.requires_grad() || b.requires_grad();
    return Tensor::make_result({g.n, g.co, g.ho, g.wo}, std::move(out),
                               needs ? nd : nullptr);
}

}  // namespace somnus

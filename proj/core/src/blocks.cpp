#include "somnus/blocks.hpp"

#include <cmath>

#include "somnus/error.hpp"
#include "somnus/ops.hpp"

namespace somnus {

namespace {

void require_batch_shape(const char* who, const Shape& got, const Shape& per_sample) {
    if (got.size() != per_sample.size() + 1 ||
        !std::equal(per_sample.begin(), per_sample.end(), got.begin() + 1)) {
        throw ShapeError(std::string(who) + ": expected batch of " + shape_str(per_sample) +
                         ", got " + shape_str(got));
    }
}

Shape batched(std::size_t b, const Shape& per_sample) {
    Shape s{b};
    s.insert(s.end(), per_sample.begin(), per_sample.end());
    return s;
}

}  // namespace

IntTensor quantize_sequence(const Tensor& hidden, const Tensor& proj) {
    require_rank("quantize_sequence", hidden.shape(), 3);
    require_rank("quantize_sequence", proj.shape(), 2);
    const std::size_t b = hidden.shape()[0], t = hidden.shape()[1], h = hidden.shape()[2];
    if (proj.shape()[0] != h) {
        throw ShapeError("quantize_sequence: hidden width " + std::to_string(h) +
                         " does not match projection " + shape_str(proj.shape()));
    }
    Tensor logits = matmul(reshape(hidden, {b * t, h}), proj);
    IntTensor flat = argmax(softmax(logits, 1), 1);
    std::vector<std::int64_t> ids = flat.data();
    return IntTensor({b, t}, std::move(ids));
}

// ---------------------------------------------------------------------------
// ChainBlock
// ---------------------------------------------------------------------------

ParamPtr ChainBlock::p(const std::string& name) const {
    for (const auto& q : params_) {
        if (q->name == name) return q;
    }
    throw BuildError("chain block: missing parameter '" + name + "'");
}

ChainBlock ChainBlock::make_visual(const std::string& prefix, Shape in_chw,
                                   std::size_t channels, int layers, int kernel,
                                   bool norm, std::uint64_t seed,
                                   ParameterRegistry& reg) {
    if (in_chw.size() != 3 || channels == 0 || layers < 1) {
        throw BuildError(prefix + ": bad visual block config");
    }
    if (kernel < 1 || kernel % 2 == 0) {
        throw BuildError(prefix + ": kernel must be odd to preserve spatial dims");
    }
    ChainBlock blk;
    blk.task_ = TaskKind::visual;
    blk.prefix_ = prefix;
    blk.in_shape_ = in_chw;
    blk.out_shape_ = {channels, in_chw[1], in_chw[2]};
    blk.layers_ = layers;
    blk.kernel_ = kernel;
    blk.norm_ = norm;
    for (int l = 0; l < layers; ++l) {
        const std::size_t cin = l == 0 ? in_chw[0] : channels;
        const std::string conv = prefix + "/conv" + std::to_string(l);
        blk.params_.push_back(reg.add(make_param(
            conv + "/w", {channels, cin, static_cast<std::size_t>(kernel),
                          static_cast<std::size_t>(kernel)},
            InitSpec::fan_in(cin * kernel * kernel), seed)));
        blk.params_.push_back(reg.add(make_param(conv + "/b", {channels},
                                                 InitSpec::zeros(), seed)));
        if (norm) {
            const std::string nm = prefix + "/norm" + std::to_string(l);
            blk.params_.push_back(reg.add(make_param(nm + "/gain", {channels},
                                                     InitSpec::ones(), seed)));
            blk.params_.push_back(reg.add(make_param(nm + "/bias", {channels},
                                                     InitSpec::zeros(), seed)));
        }
    }
    return blk;
}

ChainBlock ChainBlock::make_textual(const std::string& prefix, std::size_t seq_len,
                                    std::size_t hidden, bool norm, std::uint64_t seed,
                                    ParameterRegistry& reg) {
    if (seq_len == 0 || hidden == 0) {
        throw BuildError(prefix + ": bad textual block config");
    }
    ChainBlock blk;
    blk.task_ = TaskKind::textual;
    blk.prefix_ = prefix;
    blk.in_shape_ = {seq_len, hidden};
    blk.out_shape_ = blk.in_shape_;
    blk.hidden_ = hidden;
    blk.norm_ = norm;
    blk.params_.push_back(reg.add(make_param(prefix + "/lstm/w_x", {hidden, 4 * hidden},
                                             InitSpec::fan_in(hidden), seed)));
    blk.params_.push_back(reg.add(make_param(prefix + "/lstm/w_h", {hidden, 4 * hidden},
                                             InitSpec::fan_in(hidden), seed)));
    blk.params_.push_back(reg.add(make_param(prefix + "/lstm/b", {4 * hidden},
                                             InitSpec::lstm_bias(hidden), seed)));
    if (norm) {
        blk.params_.push_back(reg.add(make_param(prefix + "/norm/gain", {hidden},
                                                 InitSpec::ones(), seed)));
        blk.params_.push_back(reg.add(make_param(prefix + "/norm/bias", {hidden},
                                                 InitSpec::zeros(), seed)));
    }
    return blk;
}

Tensor ChainBlock::forward(const Tensor& h) const {
    require_batch_shape(prefix_.c_str(), h.shape(), in_shape_);
    if (task_ == TaskKind::visual) {
        Tensor x = h;
        const int pad = (kernel_ - 1) / 2;
        for (int l = 0; l < layers_; ++l) {
            const std::string conv = prefix_ + "/conv" + std::to_string(l);
            x = conv2d(x, p(conv + "/w")->value, p(conv + "/b")->value, 1, pad);
            if (norm_) {
                const std::string nm = prefix_ + "/norm" + std::to_string(l);
                x = layer_norm2d(x, p(nm + "/gain")->value, p(nm + "/bias")->value, 1e-5);
            }
            x = relu(x);
        }
        return x;
    }
    LstmWeights w{p(prefix_ + "/lstm/w_x")->value, p(prefix_ + "/lstm/w_h")->value,
                  p(prefix_ + "/lstm/b")->value};
    Tensor seq = lstm_seq(h, w, hidden_).seq;
    if (norm_) {
        seq = layer_norm(seq, p(prefix_ + "/norm/gain")->value,
                         p(prefix_ + "/norm/bias")->value, 1e-5, 2);
    }
    return seq;
}

std::vector<LayerCost> ChainBlock::cost() const {
    std::vector<LayerCost> out;
    if (task_ == TaskKind::visual) {
        const std::size_t hgt = in_shape_[1], wid = in_shape_[2];
        const std::size_t channels = out_shape_[0];
        for (int l = 0; l < layers_; ++l) {
            const std::size_t cin = l == 0 ? in_shape_[0] : channels;
            LayerCost c;
            c.name = prefix_ + "/layer" + std::to_string(l);
            c.params_trainable = cost::conv2d_params(cin, channels, kernel_) +
                                 (norm_ ? cost::layer_norm_params(channels) : 0);
            c.flops = cost::conv2d_flops(cin, channels, kernel_, hgt, wid) +
                      (norm_ ? cost::layer_norm_flops(1, channels * hgt * wid) : 0) +
                      cost::relu_flops(channels * hgt * wid);
            out.push_back(std::move(c));
        }
    } else {
        const std::size_t t = in_shape_[0];
        LayerCost c;
        c.name = prefix_;
        c.params_trainable = cost::lstm_params(hidden_, hidden_) +
                             (norm_ ? cost::layer_norm_params(hidden_) : 0);
        c.flops = cost::lstm_flops(hidden_, hidden_, t) +
                  (norm_ ? cost::layer_norm_flops(t, hidden_) : 0);
        out.push_back(std::move(c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Adapter
// ---------------------------------------------------------------------------

ParamPtr Adapter::p(const std::string& name) const {
    for (const auto& q : params_) {
        if (q->name == name) return q;
    }
    throw BuildError("adapter: missing parameter '" + name + "'");
}

Adapter Adapter::build(const std::string& prefix, AdapterKind kind, bool dream,
                       const Shape& block_in, const Shape& block_out,
                       const AutoencoderBundle& bundle, std::uint64_t seed,
                       ParameterRegistry& reg) {
    Adapter a;
    a.prefix_ = prefix;
    a.in_shape_ = block_in;
    a.out_shape_ = block_out;
    a.bundle_in_ = bundle.input_shape();
    a.recon_shape_ = bundle.recon_shape();
    a.latent_ = bundle.latent_dim();

    if (kind == AdapterKind::identity) {
        if (bundle.kind() == BundleKind::textual) {
            throw BuildError(prefix + ": identity adapters require a tensor-input bundle");
        }
        if (a.bundle_in_ != block_in) {
            throw BuildError(prefix + ": identity adapter needs bundle input " +
                             shape_str(a.bundle_in_) + " == block input " +
                             shape_str(block_in));
        }
        a.pre_ = PreMode::identity;
        if (dream) {
            if (a.recon_shape_ != block_out) {
                throw BuildError(prefix + ": identity adapter needs reconstruction shape " +
                                 shape_str(a.recon_shape_) + " == block output " +
                                 shape_str(block_out));
            }
        } else if (a.latent_ != numel(block_out)) {
            throw BuildError(prefix + ": identity adapter needs latent " +
                             std::to_string(a.latent_) + " == flattened block size " +
                             std::to_string(numel(block_out)));
        }
        a.post_ = PostMode::identity;
        return a;
    }

    // Forward direction.
    switch (bundle.kind()) {
        case BundleKind::zero:
        case BundleKind::identity:
            if (a.bundle_in_ != block_in) {
                throw BuildError(prefix + ": stub bundle declares input " +
                                 shape_str(a.bundle_in_) + " but block input is " +
                                 shape_str(block_in));
            }
            a.pre_ = PreMode::passthrough;
            break;
        case BundleKind::textual: {
            if (block_in.size() != 2 || block_in[0] != a.bundle_in_[0]) {
                throw BuildError(prefix + ": textual bundle expects " +
                                 std::to_string(a.bundle_in_[0]) + " steps, block input is " +
                                 shape_str(block_in));
            }
            a.pre_ = PreMode::quantize;
            const std::size_t h = block_in[1];
            const std::size_t v = bundle.textual_arch().vocab;
            a.params_.push_back(reg.add(make_param(prefix + "/quantizer/proj", {h, v},
                                                   InitSpec::fan_in(h), seed)));
            break;
        }
        case BundleKind::visual: {
            if (block_in.size() != 3) {
                throw BuildError(prefix + ": visual bundle behind a non-spatial block " +
                                 shape_str(block_in));
            }
            const std::size_t hb = block_in[1], wb = block_in[2];
            const std::size_t he = a.bundle_in_[1], we = a.bundle_in_[2];
            const std::size_t s = (he + hb - 1) / hb;
            if ((we + wb - 1) / wb != s || hb * s - he != wb * s - we) {
                throw BuildError(prefix + ": cannot adapt " + shape_str(block_in) +
                                 " to " + shape_str(a.bundle_in_) +
                                 " with a square kernel");
            }
            a.pre_ = PreMode::visual_resize;
            a.up_stride_ = static_cast<int>(s);
            a.crop_kernel_ = static_cast<int>(hb * s - he + 1);
            const std::size_t cb = block_in[0], ce = a.bundle_in_[0];
            a.params_.push_back(reg.add(make_param(
                prefix + "/pre/deconv/w", {cb, ce, s, s}, InitSpec::fan_in(cb * s * s), seed)));
            a.params_.push_back(reg.add(make_param(prefix + "/pre/deconv/b", {ce},
                                                   InitSpec::zeros(), seed)));
            const auto ck = static_cast<std::size_t>(a.crop_kernel_);
            a.params_.push_back(reg.add(make_param(
                prefix + "/pre/crop/w", {ce, ce, ck, ck}, InitSpec::fan_in(ce * ck * ck), seed)));
            a.params_.push_back(reg.add(make_param(prefix + "/pre/crop/b", {ce},
                                                   InitSpec::zeros(), seed)));
            break;
        }
    }

    // Return direction.
    if (!dream) {
        a.post_ = PostMode::dense_from_latent;
        const std::size_t width = numel(block_out);
        a.params_.push_back(reg.add(make_param(prefix + "/post/fc/w", {a.latent_, width},
                                               InitSpec::fan_in(a.latent_), seed)));
        a.params_.push_back(reg.add(make_param(prefix + "/post/fc/b", {width},
                                               InitSpec::zeros(), seed)));
    } else if (a.recon_shape_.size() == 3) {
        if (block_out.size() != 3) {
            throw BuildError(prefix + ": spatial reconstruction behind a non-spatial block");
        }
        const std::size_t hb = block_out[1], wb = block_out[2];
        const std::size_t he = a.recon_shape_[1], we = a.recon_shape_[2];
        const std::size_t s = std::max<std::size_t>(1, he / hb);
        const long k = static_cast<long>(he) - static_cast<long>(hb - 1) * static_cast<long>(s);
        const long kw = static_cast<long>(we) - static_cast<long>(wb - 1) * static_cast<long>(s);
        if (k < 1 || k != kw) {
            throw BuildError(prefix + ": cannot reduce " + shape_str(a.recon_shape_) +
                             " to " + shape_str(block_out) + " with a square kernel");
        }
        a.post_ = PostMode::visual_downscale;
        a.down_stride_ = static_cast<int>(s);
        a.down_kernel_ = static_cast<int>(k);
        const std::size_t ce = a.recon_shape_[0], cb = block_out[0];
        const auto ku = static_cast<std::size_t>(k);
        a.params_.push_back(reg.add(make_param(
            prefix + "/post/down/w", {ce, ce, ku, ku}, InitSpec::fan_in(ce * ku * ku), seed)));
        a.params_.push_back(reg.add(make_param(prefix + "/post/down/b", {ce},
                                               InitSpec::zeros(), seed)));
        a.params_.push_back(reg.add(make_param(prefix + "/post/proj/w", {cb, ce, 1, 1},
                                               InitSpec::fan_in(ce), seed)));
        a.params_.push_back(reg.add(make_param(prefix + "/post/proj/b", {cb},
                                               InitSpec::zeros(), seed)));
    } else {
        if (block_out.size() != 2 || a.recon_shape_.size() != 2 ||
            block_out[0] != a.recon_shape_[0]) {
            throw BuildError(prefix + ": sequence reconstruction " +
                             shape_str(a.recon_shape_) + " incompatible with block " +
                             shape_str(block_out));
        }
        a.post_ = PostMode::textual_dense;
        const std::size_t e = a.recon_shape_[1], h = block_out[1];
        a.params_.push_back(reg.add(make_param(prefix + "/post/fc/w", {e, h},
                                               InitSpec::fan_in(e), seed)));
        a.params_.push_back(reg.add(make_param(prefix + "/post/fc/b", {h},
                                               InitSpec::zeros(), seed)));
    }
    return a;
}

Tensor Adapter::pre(const Tensor& h) const {
    switch (pre_) {
        case PreMode::identity:
        case PreMode::passthrough:
            return h;
        case PreMode::visual_resize: {
            Tensor up = deconv2d(h, p(prefix_ + "/pre/deconv/w")->value,
                                 p(prefix_ + "/pre/deconv/b")->value, up_stride_, 0);
            return conv2d(up, p(prefix_ + "/pre/crop/w")->value,
                          p(prefix_ + "/pre/crop/b")->value, 1, 0);
        }
        case PreMode::quantize:
            throw Error("adapter: quantizing adapter produces tokens, use pre_tokens");
    }
    throw Error("adapter: unreachable");
}

IntTensor Adapter::pre_tokens(const Tensor& h) const {
    if (pre_ != PreMode::quantize) {
        throw Error("adapter: pre_tokens on a non-quantizing adapter");
    }
    return quantize_sequence(h, p(prefix_ + "/quantizer/proj")->value);
}

Tensor Adapter::post(const Tensor& encoded) const {
    switch (post_) {
        case PostMode::identity: {
            if (encoded.rank() == 2 && encoded.shape()[1] == latent_ &&
                out_shape_.size() != 1) {
                return reshape(encoded, batched(encoded.shape()[0], out_shape_));
            }
            return encoded;
        }
        case PostMode::dense_from_latent: {
            Tensor flat = add_bias_rows(matmul(encoded, p(prefix_ + "/post/fc/w")->value),
                                        p(prefix_ + "/post/fc/b")->value);
            return reshape(flat, batched(encoded.shape()[0], out_shape_));
        }
        case PostMode::visual_downscale: {
            Tensor down = conv2d(encoded, p(prefix_ + "/post/down/w")->value,
                                 p(prefix_ + "/post/down/b")->value, down_stride_, 0);
            return conv2d(down, p(prefix_ + "/post/proj/w")->value,
                          p(prefix_ + "/post/proj/b")->value, 1, 0);
        }
        case PostMode::textual_dense: {
            const std::size_t b = encoded.shape()[0], t = encoded.shape()[1];
            const std::size_t e = encoded.shape()[2];
            Tensor flat = reshape(encoded, {b * t, e});
            flat = add_bias_rows(matmul(flat, p(prefix_ + "/post/fc/w")->value),
                                 p(prefix_ + "/post/fc/b")->value);
            return reshape(flat, {b, t, out_shape_[1]});
        }
    }
    throw Error("adapter: unreachable");
}

std::vector<LayerCost> Adapter::cost() const {
    std::vector<LayerCost> out;
    if (pre_ == PreMode::visual_resize) {
        const std::size_t cb = in_shape_[0], hb = in_shape_[1], wb = in_shape_[2];
        const std::size_t ce = bundle_in_[0], he = bundle_in_[1], we = bundle_in_[2];
        const auto s = static_cast<std::size_t>(up_stride_);
        LayerCost c;
        c.name = prefix_ + "/pre";
        c.params_trainable = cost::deconv2d_params(cb, ce, s) +
                             cost::conv2d_params(ce, ce, static_cast<std::size_t>(crop_kernel_));
        c.flops = cost::deconv2d_flops(cb, ce, s, hb, wb, hb * s, wb * s) +
                  cost::conv2d_flops(ce, ce, static_cast<std::size_t>(crop_kernel_), he, we);
        out.push_back(std::move(c));
    } else if (pre_ == PreMode::quantize) {
        const std::size_t t = in_shape_[0], h = in_shape_[1];
        const std::size_t v = p(prefix_ + "/quantizer/proj")->value.shape()[1];
        LayerCost c;
        c.name = prefix_ + "/quantizer";
        c.params_trainable = cost::dense_params(h, v, false);
        c.flops = static_cast<long long>(t) * cost::dense_flops(h, v, false) +
                  cost::softmax_flops(t, v) + cost::argmax_flops(t, v);
        out.push_back(std::move(c));
    }
    switch (post_) {
        case PostMode::dense_from_latent: {
            LayerCost c;
            c.name = prefix_ + "/post";
            c.params_trainable = cost::dense_params(latent_, numel(out_shape_));
            c.flops = cost::dense_flops(latent_, numel(out_shape_));
            out.push_back(std::move(c));
            break;
        }
        case PostMode::visual_downscale: {
            const std::size_t cb = out_shape_[0], hb = out_shape_[1], wb = out_shape_[2];
            const std::size_t ce = recon_shape_[0], he = recon_shape_[1], we = recon_shape_[2];
            const auto k = static_cast<std::size_t>(down_kernel_);
            LayerCost c;
            c.name = prefix_ + "/post";
            c.params_trainable =
                cost::conv2d_params(ce, ce, k) + cost::conv2d_params(ce, cb, 1);
            c.flops = cost::conv2d_flops(ce, ce, k, hb, wb) +
                      cost::conv2d_flops(ce, cb, 1, hb, wb);
            (void)he;
            (void)we;
            out.push_back(std::move(c));
            break;
        }
        case PostMode::textual_dense: {
            const std::size_t t = out_shape_[0], h = out_shape_[1];
            const std::size_t e = recon_shape_[1];
            LayerCost c;
            c.name = prefix_ + "/post";
            c.params_trainable = cost::dense_params(e, h);
            c.flops = static_cast<long long>(t) * cost::dense_flops(e, h);
            out.push_back(std::move(c));
            break;
        }
        case PostMode::identity:
            break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// SleepBlock / DreamBlock
// ---------------------------------------------------------------------------

SleepBlock SleepBlock::build(const std::string& prefix, ChainBlock chain,
                             BundlePtr bundle, AdapterKind akind, std::uint64_t seed,
                             ParameterRegistry& reg) {
    if (!bundle) throw BuildError(prefix + ": sleep block requires a bundle");
    SleepBlock blk;
    blk.adapter_ = Adapter::build(prefix + "/adapter", akind, false, chain.in_shape(),
                                  chain.out_shape(), *bundle, seed, reg);
    blk.chain_ = std::move(chain);
    blk.bundle_ = std::move(bundle);
    return blk;
}

SleepForward SleepBlock::forward(const Tensor& h) const {
    SleepForward r;
    r.chain_path = chain_.forward(h);
    Tensor latent = adapter_.quantizes() ? bundle_->encode_tokens(adapter_.pre_tokens(h))
                                         : bundle_->encode(adapter_.pre(h));
    r.encoder_path = adapter_.post(latent);
    r.out = add(r.chain_path, r.encoder_path);
    return r;
}

std::vector<LayerCost> SleepBlock::cost() const {
    std::vector<LayerCost> out = chain_.cost();
    auto ad = adapter_.cost();
    out.insert(out.end(), ad.begin(), ad.end());
    return out;
}

DreamBlock DreamBlock::build(const std::string& prefix, ChainBlock chain,
                             BundlePtr bundle, AdapterKind akind, std::uint64_t seed,
                             ParameterRegistry& reg) {
    if (!bundle) throw BuildError(prefix + ": dream block requires a bundle");
    DreamBlock blk;
    blk.adapter_ = Adapter::build(prefix + "/adapter", akind, true, chain.in_shape(),
                                  chain.out_shape(), *bundle, seed, reg);
    blk.chain_ = std::move(chain);
    blk.bundle_ = std::move(bundle);
    return blk;
}

DreamForward DreamBlock::forward(const Tensor& h) const {
    DreamForward r;
    r.chain_path = chain_.forward(h);
    if (adapter_.quantizes()) {
        IntTensor ids = adapter_.pre_tokens(h);
        auto recon = bundle_->reconstruct_tokens(ids);
        r.dream = recon.seq;
        r.dream_tokens = recon.tokens;
    } else {
        r.adapted = adapter_.pre(h);
        r.dream = bundle_->reconstruct(r.adapted);
    }
    r.decoder_path = adapter_.post(r.dream);
    r.out = add(r.chain_path, r.decoder_path);
    return r;
}

Shape DreamBlock::dream_shape() const { return bundle_->recon_shape(); }

std::vector<LayerCost> DreamBlock::cost() const {
    std::vector<LayerCost> out = chain_.cost();
    auto ad = adapter_.cost();
    out.insert(out.end(), ad.begin(), ad.end());
    return out;
}

// ---------------------------------------------------------------------------
// DreamBranch
// ---------------------------------------------------------------------------

ParamPtr DreamBranch::p(const std::string& name) const {
    for (const auto& q : params_) {
        if (q->name == name) return q;
    }
    throw BuildError("dream branch: missing parameter '" + name + "'");
}

DreamBranch DreamBranch::build(const std::string& prefix, TaskKind task,
                               Shape dream_shape, int layers, std::uint64_t seed,
                               ParameterRegistry& reg) {
    if (layers < 1) throw BuildError(prefix + ": branch needs at least one layer");
    DreamBranch br;
    br.task_ = task;
    br.prefix_ = prefix;
    br.layers_ = layers;
    if (task == TaskKind::visual) {
        if (dream_shape.size() != 3) {
            throw BuildError(prefix + ": visual branch expects (C,H,W) dreams, got " +
                             shape_str(dream_shape));
        }
        const std::size_t c = dream_shape[0];
        br.width_ = c;
        for (int l = 0; l < layers; ++l) {
            const std::string conv = prefix + "/conv" + std::to_string(l);
            reg.add(br.params_.emplace_back(
                make_param(conv + "/w", {c, c, 3, 3}, InitSpec::fan_in(c * 9), seed)));
            reg.add(br.params_.emplace_back(
                make_param(conv + "/b", {c}, InitSpec::zeros(), seed)));
            const std::string nm = prefix + "/norm" + std::to_string(l);
            reg.add(br.params_.emplace_back(
                make_param(nm + "/gain", {c}, InitSpec::ones(), seed)));
            reg.add(br.params_.emplace_back(
                make_param(nm + "/bias", {c}, InitSpec::zeros(), seed)));
        }
    } else {
        if (dream_shape.size() != 2) {
            throw BuildError(prefix + ": textual branch expects (T,E) dreams, got " +
                             shape_str(dream_shape));
        }
        const std::size_t e = dream_shape[1];
        br.width_ = e;
        for (int l = 0; l < layers; ++l) {
            const std::string lstm = prefix + "/lstm" + std::to_string(l);
            reg.add(br.params_.emplace_back(make_param(lstm + "/w_x", {e, 4 * e},
                                                       InitSpec::fan_in(e), seed)));
            reg.add(br.params_.emplace_back(make_param(lstm + "/w_h", {e, 4 * e},
                                                       InitSpec::fan_in(e), seed)));
            reg.add(br.params_.emplace_back(
                make_param(lstm + "/b", {4 * e}, InitSpec::lstm_bias(e), seed)));
            const std::string nm = prefix + "/norm" + std::to_string(l);
            reg.add(br.params_.emplace_back(
                make_param(nm + "/gain", {e}, InitSpec::ones(), seed)));
            reg.add(br.params_.emplace_back(
                make_param(nm + "/bias", {e}, InitSpec::zeros(), seed)));
        }
    }
    br.dream_shape_ = std::move(dream_shape);
    return br;
}

Tensor DreamBranch::forward(const std::vector<Tensor>& dreams) const {
    if (dreams.empty()) {
        throw ShapeError(prefix_ + ": no dream tensors to refine");
    }
    Tensor total;
    for (const auto& dream : dreams) {
        require_batch_shape(prefix_.c_str(), dream.shape(), dream_shape_);
        Tensor x = dream;
        for (int l = 0; l < layers_; ++l) {
            if (task_ == TaskKind::visual) {
                const std::string conv = prefix_ + "/conv" + std::to_string(l);
                const std::string nm = prefix_ + "/norm" + std::to_string(l);
                x = conv2d(x, p(conv + "/w")->value, p(conv + "/b")->value, 1, 1);
                x = layer_norm2d(x, p(nm + "/gain")->value, p(nm + "/bias")->value, 1e-5);
                x = relu(x);
            } else {
                const std::string lstm = prefix_ + "/lstm" + std::to_string(l);
                const std::string nm = prefix_ + "/norm" + std::to_string(l);
                LstmWeights w{p(lstm + "/w_x")->value, p(lstm + "/w_h")->value,
                              p(lstm + "/b")->value};
                x = lstm_seq(x, w, width_).seq;
                x = layer_norm(x, p(nm + "/gain")->value, p(nm + "/bias")->value, 1e-5, 2);
            }
        }
        Tensor pooled = task_ == TaskKind::visual ? global_avg_pool2d(x) : mean_over_time(x);
        total = total.defined() ? add(total, pooled) : pooled;
    }
    return total;
}

std::vector<LayerCost> DreamBranch::cost(std::size_t taps) const {
    std::vector<LayerCost> out;
    const auto n = static_cast<long long>(taps);
    if (task_ == TaskKind::visual) {
        const std::size_t c = dream_shape_[0], h = dream_shape_[1], w = dream_shape_[2];
        for (int l = 0; l < layers_; ++l) {
            LayerCost e;
            e.name = prefix_ + "/layer" + std::to_string(l);
            e.params_trainable = cost::conv2d_params(c, c, 3) + cost::layer_norm_params(c);
            e.flops = n * (cost::conv2d_flops(c, c, 3, h, w) +
                           cost::layer_norm_flops(1, c * h * w) + cost::relu_flops(c * h * w));
            out.push_back(std::move(e));
        }
        LayerCost pool;
        pool.name = prefix_ + "/pool";
        pool.flops = n * cost::avg_pool2d_flops(c, h, w);
        out.push_back(std::move(pool));
    } else {
        const std::size_t t = dream_shape_[0], e = dream_shape_[1];
        for (int l = 0; l < layers_; ++l) {
            LayerCost c;
            c.name = prefix_ + "/layer" + std::to_string(l);
            c.params_trainable = cost::lstm_params(e, e) + cost::layer_norm_params(e);
            c.flops = n * (cost::lstm_flops(e, e, t) + cost::layer_norm_flops(t, e));
            out.push_back(std::move(c));
        }
        LayerCost pool;
        pool.name = prefix_ + "/pool";
        pool.flops = n * cost::mean_time_flops(t, e);
        out.push_back(std::move(pool));
    }
    return out;
}

}  // namespace somnus

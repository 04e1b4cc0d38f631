#include "somnus/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "somnus/error.hpp"
#include "somnus/ops.hpp"
#include "somnus/rng.hpp"
#include "somnus/serialize.hpp"

namespace somnus {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void require_batch_of(const char* op, const Shape& got, const Shape& per_sample) {
    Shape expect = {got.empty() ? 0 : got[0]};
    expect.insert(expect.end(), per_sample.begin(), per_sample.end());
    if (got.size() != per_sample.size() + 1 || got != expect) {
        throw ShapeError(std::string(op) + ": expected batch of " + shape_str(per_sample) +
                         ", got " + shape_str(got));
    }
}

LayerCost cost_entry(std::string name, long long params, long long flops, bool frozen) {
    LayerCost c;
    c.name = std::move(name);
    (frozen ? c.params_frozen : c.params_trainable) = params;
    c.flops = flops;
    return c;
}

}  // namespace

const char* to_string(BundleKind k) {
    switch (k) {
        case BundleKind::visual: return "visual";
        case BundleKind::textual: return "textual";
        case BundleKind::zero: return "zero";
        case BundleKind::identity: return "identity";
    }
    return "?";
}

ParamPtr AutoencoderBundle::p(const char* name) const {
    for (const auto& list : {&enc_params_, &dec_params_, &vocab_params_}) {
        for (const auto& q : *list) {
            if (q->name == name) return q;
        }
    }
    throw BuildError(std::string("bundle: missing parameter '") + name + "'");
}

AutoencoderBundle AutoencoderBundle::make_visual(const VisualAeArch& arch,
                                                 std::uint64_t seed) {
    if (arch.input.size() != 3 || arch.input[1] % 4 != 0 || arch.input[2] % 4 != 0 ||
        arch.input[1] < 4 || arch.input[2] < 4) {
        throw BuildError("visual autoencoder: input must be (C,H,W) with H,W divisible by 4, got " +
                         shape_str(arch.input));
    }
    if (arch.c1 == 0 || arch.c2 == 0 || arch.latent == 0) {
        throw BuildError("visual autoencoder: zero-sized layer in config");
    }
    AutoencoderBundle b;
    b.kind_ = BundleKind::visual;
    b.varch_ = arch;
    b.input_shape_ = arch.input;
    b.latent_ = arch.latent;
    b.frozen_ = false;
    const std::size_t c = arch.input[0], h = arch.input[1], w = arch.input[2];
    const std::size_t flat = arch.c2 * (h / 4) * (w / 4);
    auto& e = b.enc_params_;
    e.push_back(make_param("encoder/conv1/w", {arch.c1, c, 4, 4},
                           InitSpec::fan_in(c * 16), seed));
    e.push_back(make_param("encoder/conv1/b", {arch.c1}, InitSpec::zeros(), seed));
    e.push_back(make_param("encoder/conv2/w", {arch.c2, arch.c1, 4, 4},
                           InitSpec::fan_in(arch.c1 * 16), seed));
    e.push_back(make_param("encoder/conv2/b", {arch.c2}, InitSpec::zeros(), seed));
    e.push_back(make_param("encoder/fc/w", {flat, arch.latent}, InitSpec::fan_in(flat), seed));
    e.push_back(make_param("encoder/fc/b", {arch.latent}, InitSpec::zeros(), seed));
    auto& d = b.dec_params_;
    d.push_back(make_param("decoder/fc/w", {arch.latent, flat},
                           InitSpec::fan_in(arch.latent), seed));
    d.push_back(make_param("decoder/fc/b", {flat}, InitSpec::zeros(), seed));
    d.push_back(make_param("decoder/deconv1/w", {arch.c2, arch.c1, 4, 4},
                           InitSpec::fan_in(arch.c2 * 16), seed));
    d.push_back(make_param("decoder/deconv1/b", {arch.c1}, InitSpec::zeros(), seed));
    d.push_back(make_param("decoder/deconv2/w", {arch.c1, c, 4, 4},
                           InitSpec::fan_in(arch.c1 * 16), seed));
    d.push_back(make_param("decoder/deconv2/b", {c}, InitSpec::zeros(), seed));
    return b;
}

AutoencoderBundle AutoencoderBundle::make_textual(const TextualAeArch& arch,
                                                  std::uint64_t seed) {
    if (arch.seq_len == 0 || arch.vocab < 2 || arch.embed == 0 || arch.hidden == 0 ||
        arch.latent == 0) {
        throw BuildError("textual autoencoder: degenerate config");
    }
    AutoencoderBundle b;
    b.kind_ = BundleKind::textual;
    b.tarch_ = arch;
    b.input_shape_ = {arch.seq_len};
    b.latent_ = arch.latent;
    b.frozen_ = false;
    auto& e = b.enc_params_;
    e.push_back(make_param("encoder/embed", {arch.vocab, arch.embed},
                           InitSpec::fan_in(arch.embed), seed));
    e.push_back(make_param("encoder/lstm/w_x", {arch.embed, 4 * arch.hidden},
                           InitSpec::fan_in(arch.embed), seed));
    e.push_back(make_param("encoder/lstm/w_h", {arch.hidden, 4 * arch.hidden},
                           InitSpec::fan_in(arch.hidden), seed));
    e.push_back(make_param("encoder/lstm/b", {4 * arch.hidden},
                           InitSpec::lstm_bias(arch.hidden), seed));
    e.push_back(make_param("encoder/fc/w", {arch.hidden, arch.latent},
                           InitSpec::fan_in(arch.hidden), seed));
    e.push_back(make_param("encoder/fc/b", {arch.latent}, InitSpec::zeros(), seed));
    auto& d = b.dec_params_;
    d.push_back(make_param("decoder/h0/w", {arch.latent, arch.hidden},
                           InitSpec::fan_in(arch.latent), seed));
    d.push_back(make_param("decoder/h0/b", {arch.hidden}, InitSpec::zeros(), seed));
    d.push_back(make_param("decoder/in/w", {arch.latent, arch.embed},
                           InitSpec::fan_in(arch.latent), seed));
    d.push_back(make_param("decoder/in/b", {arch.embed}, InitSpec::zeros(), seed));
    d.push_back(make_param("decoder/lstm/w_x", {arch.embed, 4 * arch.hidden},
                           InitSpec::fan_in(arch.embed), seed));
    d.push_back(make_param("decoder/lstm/w_h", {arch.hidden, 4 * arch.hidden},
                           InitSpec::fan_in(arch.hidden), seed));
    d.push_back(make_param("decoder/lstm/b", {4 * arch.hidden},
                           InitSpec::lstm_bias(arch.hidden), seed));
    d.push_back(make_param("decoder/seq/w", {arch.hidden, arch.embed},
                           InitSpec::fan_in(arch.hidden), seed));
    d.push_back(make_param("decoder/seq/b", {arch.embed}, InitSpec::zeros(), seed));
    auto& v = b.vocab_params_;
    v.push_back(make_param("decoder/vocab/w", {arch.hidden, arch.vocab},
                           InitSpec::fan_in(arch.hidden), seed));
    v.push_back(make_param("decoder/vocab/b", {arch.vocab}, InitSpec::zeros(), seed));
    return b;
}

AutoencoderBundle AutoencoderBundle::make_stub(BundleKind kind, Shape input_shape,
                                               std::size_t latent_dim) {
    if (kind != BundleKind::zero && kind != BundleKind::identity) {
        throw BuildError("make_stub: kind must be zero or identity");
    }
    if (input_shape.empty() || numel(input_shape) == 0) {
        throw BuildError("make_stub: degenerate input shape " + shape_str(input_shape));
    }
    const std::size_t flat = numel(input_shape);
    AutoencoderBundle b;
    b.kind_ = kind;
    if (kind == BundleKind::identity) {
        if (latent_dim != 0 && latent_dim != flat) {
            throw BuildError("make_stub: identity stub requires latent == flattened size " +
                             std::to_string(flat));
        }
        b.latent_ = flat;
    } else {
        b.latent_ = latent_dim == 0 ? flat : latent_dim;
    }
    b.input_shape_ = std::move(input_shape);
    b.frozen_ = true;
    b.manifest_.objective = "stub";
    return b;
}

Shape AutoencoderBundle::recon_shape() const {
    if (kind_ == BundleKind::textual) return {tarch_.seq_len, tarch_.embed};
    return input_shape_;
}

Tensor AutoencoderBundle::encode(const Tensor& x) const {
    require_batch_of("encode", x.shape(), input_shape_);
    const std::size_t batch = x.shape()[0];
    switch (kind_) {
        case BundleKind::zero:
            return Tensor::zeros({batch, latent_});
        case BundleKind::identity:
            return reshape(x, {batch, latent_});
        case BundleKind::visual: {
            Tensor h = relu(conv2d(x, p("encoder/conv1/w")->value,
                                   p("encoder/conv1/b")->value, 2, 1));
            h = relu(conv2d(h, p("encoder/conv2/w")->value, p("encoder/conv2/b")->value,
                            2, 1));
            h = reshape(h, {batch, h.numel() / batch});
            return add_bias_rows(matmul(h, p("encoder/fc/w")->value),
                                 p("encoder/fc/b")->value);
        }
        case BundleKind::textual:
            throw Error("encode: textual bundle consumes token ids; use encode_tokens");
    }
    throw Error("encode: unreachable");
}

Tensor AutoencoderBundle::encode_tokens(const IntTensor& ids) const {
    if (kind_ != BundleKind::textual) {
        throw Error("encode_tokens: only the textual bundle consumes token ids");
    }
    require_batch_of("encode_tokens", ids.shape(), input_shape_);
    Tensor e = embedding_lookup(p("encoder/embed")->value, ids);
    LstmWeights w{p("encoder/lstm/w_x")->value, p("encoder/lstm/w_h")->value,
                  p("encoder/lstm/b")->value};
    LstmSeqOut out = lstm_seq(e, w, tarch_.hidden);
    return add_bias_rows(matmul(out.h_last, p("encoder/fc/w")->value),
                         p("encoder/fc/b")->value);
}

Tensor AutoencoderBundle::textual_decode_hidden(const Tensor& latent) const {
    const std::size_t batch = latent.shape()[0];
    Tensor h0 = tanh(add_bias_rows(matmul(latent, p("decoder/h0/w")->value),
                                   p("decoder/h0/b")->value));
    Tensor x_in = add_bias_rows(matmul(latent, p("decoder/in/w")->value),
                                p("decoder/in/b")->value);
    LstmWeights w{p("decoder/lstm/w_x")->value, p("decoder/lstm/w_h")->value,
                  p("decoder/lstm/b")->value};
    LstmSeqOut out = lstm_unroll_const_input(x_in, tarch_.seq_len, w, h0,
                                             Tensor::zeros({batch, tarch_.hidden}));
    return out.seq;  // (B,T,H)
}

Tensor AutoencoderBundle::reconstruct(const Tensor& x) const {
    switch (kind_) {
        case BundleKind::zero: {
            require_batch_of("reconstruct", x.shape(), input_shape_);
            return Tensor::zeros(x.shape());
        }
        case BundleKind::identity:
            require_batch_of("reconstruct", x.shape(), input_shape_);
            return x;
        case BundleKind::visual: {
            Tensor z = encode(x);
            const std::size_t batch = z.shape()[0];
            const std::size_t h4 = varch_.input[1] / 4, w4 = varch_.input[2] / 4;
            Tensor h = relu(add_bias_rows(matmul(z, p("decoder/fc/w")->value),
                                          p("decoder/fc/b")->value));
            h = reshape(h, {batch, varch_.c2, h4, w4});
            h = relu(deconv2d(h, p("decoder/deconv1/w")->value,
                              p("decoder/deconv1/b")->value, 2, 1));
            return deconv2d(h, p("decoder/deconv2/w")->value,
                            p("decoder/deconv2/b")->value, 2, 1);
        }
        case BundleKind::textual:
            throw Error("reconstruct: textual bundle consumes token ids; use reconstruct_tokens");
    }
    throw Error("reconstruct: unreachable");
}

AutoencoderBundle::TextRecon AutoencoderBundle::reconstruct_tokens(
    const IntTensor& ids) const {
    if (kind_ != BundleKind::textual) {
        throw Error("reconstruct_tokens: only the textual bundle consumes token ids");
    }
    const std::size_t batch = ids.shape()[0];
    Tensor hid = textual_decode_hidden(encode_tokens(ids));
    Tensor flat = reshape(hid, {batch * tarch_.seq_len, tarch_.hidden});
    Tensor seq = add_bias_rows(matmul(flat, p("decoder/seq/w")->value),
                               p("decoder/seq/b")->value);
    Tensor logits = add_bias_rows(matmul(flat, p("decoder/vocab/w")->value),
                                  p("decoder/vocab/b")->value);
    IntTensor flat_tokens = argmax(softmax(logits, 1), 1);
    std::vector<std::int64_t> tok = flat_tokens.data();
    return {reshape(seq, {batch, tarch_.seq_len, tarch_.embed}),
            IntTensor({batch, tarch_.seq_len}, std::move(tok))};
}

Tensor AutoencoderBundle::textual_recon_logits(const IntTensor& ids) const {
    if (kind_ != BundleKind::textual) {
        throw Error("textual_recon_logits: textual bundles only");
    }
    const std::size_t batch = ids.shape()[0];
    Tensor hid = textual_decode_hidden(encode_tokens(ids));
    Tensor flat = reshape(hid, {batch * tarch_.seq_len, tarch_.hidden});
    return add_bias_rows(matmul(flat, p("decoder/vocab/w")->value),
                         p("decoder/vocab/b")->value);
}

std::vector<ParamPtr> AutoencoderBundle::encoder_params() const { return enc_params_; }

std::vector<ParamPtr> AutoencoderBundle::decoder_params() const { return dec_params_; }

std::vector<ParamPtr> AutoencoderBundle::all_params() const {
    std::vector<ParamPtr> all = enc_params_;
    all.insert(all.end(), dec_params_.begin(), dec_params_.end());
    all.insert(all.end(), vocab_params_.begin(), vocab_params_.end());
    return all;
}

void AutoencoderBundle::set_frozen(bool frozen) {
    frozen_ = frozen;
    for (const auto& q : all_params()) q->set_trainable(!frozen);
}

std::vector<LayerCost> AutoencoderBundle::encoder_cost() const {
    std::vector<LayerCost> out;
    if (is_stub()) return out;
    if (kind_ == BundleKind::visual) {
        const std::size_t c = varch_.input[0], h = varch_.input[1], w = varch_.input[2];
        const std::size_t flat = varch_.c2 * (h / 4) * (w / 4);
        out.push_back(cost_entry("encoder/conv1",
                                 cost::conv2d_params(c, varch_.c1, 4),
                                 cost::conv2d_flops(c, varch_.c1, 4, h / 2, w / 2) +
                                     cost::relu_flops(varch_.c1 * (h / 2) * (w / 2)),
                                 frozen_));
        out.push_back(cost_entry("encoder/conv2",
                                 cost::conv2d_params(varch_.c1, varch_.c2, 4),
                                 cost::conv2d_flops(varch_.c1, varch_.c2, 4, h / 4, w / 4) +
                                     cost::relu_flops(varch_.c2 * (h / 4) * (w / 4)),
                                 frozen_));
        out.push_back(cost_entry("encoder/fc", cost::dense_params(flat, latent_),
                                 cost::dense_flops(flat, latent_), frozen_));
    } else {
        out.push_back(cost_entry("encoder/embed",
                                 cost::embedding_params(tarch_.vocab, tarch_.embed), 0,
                                 frozen_));
        out.push_back(cost_entry("encoder/lstm",
                                 cost::lstm_params(tarch_.embed, tarch_.hidden),
                                 cost::lstm_flops(tarch_.embed, tarch_.hidden, tarch_.seq_len),
                                 frozen_));
        out.push_back(cost_entry("encoder/fc",
                                 cost::dense_params(tarch_.hidden, latent_),
                                 cost::dense_flops(tarch_.hidden, latent_), frozen_));
    }
    return out;
}

std::vector<LayerCost> AutoencoderBundle::decoder_cost() const {
    std::vector<LayerCost> out;
    if (is_stub()) return out;
    if (kind_ == BundleKind::visual) {
        const std::size_t c = varch_.input[0], h = varch_.input[1], w = varch_.input[2];
        const std::size_t flat = varch_.c2 * (h / 4) * (w / 4);
        out.push_back(cost_entry("decoder/fc", cost::dense_params(latent_, flat),
                                 cost::dense_flops(latent_, flat) + cost::relu_flops(flat),
                                 frozen_));
        out.push_back(cost_entry(
            "decoder/deconv1", cost::deconv2d_params(varch_.c2, varch_.c1, 4),
            cost::deconv2d_flops(varch_.c2, varch_.c1, 4, h / 4, w / 4, h / 2, w / 2) +
                cost::relu_flops(varch_.c1 * (h / 2) * (w / 2)),
            frozen_));
        out.push_back(cost_entry(
            "decoder/deconv2", cost::deconv2d_params(varch_.c1, c, 4),
            cost::deconv2d_flops(varch_.c1, c, 4, h / 2, w / 2, h, w), frozen_));
    } else {
        out.push_back(cost_entry("decoder/h0",
                                 cost::dense_params(latent_, tarch_.hidden),
                                 cost::dense_flops(latent_, tarch_.hidden) + tarch_.hidden,
                                 frozen_));
        out.push_back(cost_entry("decoder/in", cost::dense_params(latent_, tarch_.embed),
                                 cost::dense_flops(latent_, tarch_.embed), frozen_));
        out.push_back(cost_entry("decoder/lstm",
                                 cost::lstm_params(tarch_.embed, tarch_.hidden),
                                 cost::lstm_flops(tarch_.embed, tarch_.hidden, tarch_.seq_len),
                                 frozen_));
        out.push_back(cost_entry(
            "decoder/seq", cost::dense_params(tarch_.hidden, tarch_.embed),
            cost::dense_flops(tarch_.hidden, tarch_.embed) *
                static_cast<long long>(tarch_.seq_len),
            frozen_));
    }
    return out;
}

namespace {

double eval_recon_loss(const AutoencoderBundle& b, const Dataset& ds, int batch_size) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < ds.size(); start += batch_size) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(ds.size(), start + batch_size); ++i) {
            idx.push_back(i);
        }
        Batch batch = ds.batch(idx);
        double loss = 0.0;
        if (ds.kind == TaskKind::visual) {
            loss = mse(b.reconstruct(batch.images), batch.images).item();
        } else {
            const auto& ids = batch.tokens.data();
            IntTensor flat({ids.size()}, std::vector<std::int64_t>(ids));
            loss = cross_entropy(b.textual_recon_logits(batch.tokens), flat).item();
        }
        total += loss * static_cast<double>(idx.size());
        count += idx.size();
    }
    return total / static_cast<double>(count);
}

}  // namespace

PretrainResult pretrain(const Dataset& train, const Dataset* heldout,
                        const AeConfig& arch, const OptimizerConfig& opt) {
    opt.validate();
    if (train.size() == 0) throw ValueError("pretrain: empty dataset");

    BundlePtr bundle;
    if (train.kind == TaskKind::visual) {
        VisualAeArch a = arch.visual;
        a.input = train.image_shape;
        bundle = std::make_shared<AutoencoderBundle>(
            AutoencoderBundle::make_visual(a, opt.seed));
    } else {
        TextualAeArch a = arch.textual;
        a.seq_len = train.seq_len;
        a.vocab = train.vocab_size;
        bundle = std::make_shared<AutoencoderBundle>(
            AutoencoderBundle::make_textual(a, opt.seed));
    }
    const Dataset& eval_set = heldout ? *heldout : train;

    auto params = bundle->all_params();
    auto& manifest = bundle->manifest();
    manifest.dataset_crc = train.fingerprint();
    manifest.samples = train.size();
    manifest.epochs = opt.epochs;
    manifest.objective = train.kind == TaskKind::visual ? "mse" : "cross_entropy";
    manifest.initial_loss = eval_recon_loss(*bundle, eval_set, opt.batch_size);
    manifest.final_loss = manifest.initial_loss;

    PretrainResult result;
    Rng order_rng(derive_seed(opt.seed, "pretrain/order"));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        order_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(opt.batch_size)) {
            std::vector<std::size_t> idx(
                order.begin() + start,
                order.begin() + std::min(order.size(),
                                         start + static_cast<std::size_t>(opt.batch_size)));
            Batch batch = train.batch(idx);
            Tensor loss;
            if (train.kind == TaskKind::visual) {
                loss = mse(bundle->reconstruct(batch.images), batch.images);
            } else {
                const auto& ids = batch.tokens.data();
                IntTensor flat({ids.size()}, std::vector<std::int64_t>(ids));
                loss = cross_entropy(bundle->textual_recon_logits(batch.tokens), flat);
            }
            if (!std::isfinite(loss.item())) {
                throw DivergenceError(
                    "pretrain: loss became non-finite in epoch " + std::to_string(epoch) +
                    " (" + std::to_string(loss.item()) + "); lower the learning rate");
            }
            backward(loss);
            adam_step(params, opt);
        }
        result.epoch_losses.push_back(eval_recon_loss(*bundle, eval_set, opt.batch_size));
    }
    if (!result.epoch_losses.empty()) manifest.final_loss = result.epoch_losses.back();
    bundle->set_frozen(true);
    result.bundle = std::move(bundle);
    return result;
}

std::string bundle_manifest_json(const AutoencoderBundle& bundle) {
    ojson m;
    m["format"] = "autoencoder-bundle";
    m["kind"] = to_string(bundle.kind());
    m["latent"] = bundle.latent_dim();
    m["input_shape"] = bundle.input_shape();
    if (bundle.kind() == BundleKind::visual) {
        m["arch"] = {{"c1", bundle.visual_arch().c1}, {"c2", bundle.visual_arch().c2}};
    } else if (bundle.kind() == BundleKind::textual) {
        const auto& t = bundle.textual_arch();
        m["arch"] = {{"seq_len", t.seq_len},
                     {"vocab", t.vocab},
                     {"embed", t.embed},
                     {"hidden", t.hidden}};
    }
    const auto& man = bundle.manifest();
    m["train"] = {{"dataset_crc", man.dataset_crc}, {"samples", man.samples},
                  {"epochs", man.epochs},           {"initial_loss", man.initial_loss},
                  {"final_loss", man.final_loss},   {"objective", man.objective}};
    return m.dump();
}

BundlePtr bundle_from_manifest_json(const std::string& manifest,
                                    const std::string& context) {
    json m;
    try {
        m = json::parse(manifest);
    } catch (const json::exception& e) {
        throw FormatError(context + ": bad manifest JSON: " + e.what());
    }
    if (m.value("format", "") != "autoencoder-bundle") {
        throw FormatError(context + ": not an autoencoder bundle");
    }
    const std::string kind = m.at("kind").get<std::string>();
    const Shape input_shape = m.at("input_shape").get<Shape>();
    const std::size_t latent = m.at("latent").get<std::size_t>();

    BundlePtr bundle;
    if (kind == "visual") {
        VisualAeArch a;
        a.input = input_shape;
        a.c1 = m.at("arch").at("c1").get<std::size_t>();
        a.c2 = m.at("arch").at("c2").get<std::size_t>();
        a.latent = latent;
        bundle = std::make_shared<AutoencoderBundle>(AutoencoderBundle::make_visual(a, 0));
    } else if (kind == "textual") {
        TextualAeArch a;
        a.seq_len = m.at("arch").at("seq_len").get<std::size_t>();
        a.vocab = m.at("arch").at("vocab").get<std::size_t>();
        a.embed = m.at("arch").at("embed").get<std::size_t>();
        a.hidden = m.at("arch").at("hidden").get<std::size_t>();
        a.latent = latent;
        bundle = std::make_shared<AutoencoderBundle>(AutoencoderBundle::make_textual(a, 0));
    } else if (kind == "zero" || kind == "identity") {
        bundle = std::make_shared<AutoencoderBundle>(AutoencoderBundle::make_stub(
            kind == "zero" ? BundleKind::zero : BundleKind::identity, input_shape, latent));
    } else {
        throw FormatError(context + ": unknown bundle kind '" + kind + "'");
    }

    if (m.contains("train")) {
        const auto& t = m.at("train");
        auto& man = bundle->manifest();
        man.dataset_crc = t.value("dataset_crc", 0u);
        man.samples = t.value("samples", std::size_t{0});
        man.epochs = t.value("epochs", 0);
        man.initial_loss = t.value("initial_loss", 0.0);
        man.final_loss = t.value("final_loss", 0.0);
        man.objective = t.value("objective", "");
    }
    return bundle;
}

void save_bundle(const AutoencoderBundle& bundle, const std::string& path) {
    WeightFile file;
    file.manifest_json = bundle_manifest_json(bundle);
    for (const auto& q : bundle.all_params()) {
        file.arrays.push_back({q->name, q->value.shape(), q->value.data()});
    }
    save_weight_file(path, file);
}

BundlePtr load_bundle(const std::string& path) {
    WeightFile file = load_weight_file(path);
    BundlePtr bundle = bundle_from_manifest_json(file.manifest_json, path);

    auto params = bundle->all_params();
    if (params.size() != file.arrays.size()) {
        throw FormatError(path + ": expected " + std::to_string(params.size()) +
                          " parameter arrays, found " + std::to_string(file.arrays.size()));
    }
    for (const auto& q : params) {
        const NamedArray* found = nullptr;
        for (const auto& a : file.arrays) {
            if (a.name == q->name) {
                found = &a;
                break;
            }
        }
        if (!found) throw FormatError(path + ": missing parameter '" + q->name + "'");
        if (found->shape != q->value.shape()) {
            throw FormatError(path + ": parameter '" + q->name + "' has shape " +
                              shape_str(found->shape) + ", expected " +
                              shape_str(q->value.shape()));
        }
        q->value.data() = found->values;
    }
    bundle->set_frozen(true);
    return bundle;
}

}  // namespace somnus

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "somnus/autoencoder.hpp"
#include "somnus/cost.hpp"
#include "somnus/data.hpp"
#include "somnus/param.hpp"
#include "somnus/tensor.hpp"

namespace somnus {

// Per-position greedy readout of a hidden sequence against a vocabulary
// projection: argmax(softmax(hidden . proj)). The IntTensor result carries no
// gradient, so the whole quantization path is a stop-gradient boundary.
IntTensor quantize_sequence(const Tensor& hidden, const Tensor& proj);

// Supervised building block: conv->norm->relu stacks for the visual task,
// lstm->norm for the textual one. Shapes are fully static: out_shape() is
// fixed at build time.
class ChainBlock {
public:
    static ChainBlock make_visual(const std::string& prefix, Shape in_chw,
                                  std::size_t channels, int layers, int kernel,
                                  bool norm, std::uint64_t seed, ParameterRegistry& reg);
    static ChainBlock make_textual(const std::string& prefix, std::size_t seq_len,
                                   std::size_t hidden, bool norm, std::uint64_t seed,
                                   ParameterRegistry& reg);

    Tensor forward(const Tensor& h) const;

    TaskKind task() const { return task_; }
    const Shape& in_shape() const { return in_shape_; }    // per sample
    const Shape& out_shape() const { return out_shape_; }  // per sample
    std::vector<LayerCost> cost() const;

    ChainBlock() = default;  // empty; assign from a make_* factory

private:
    TaskKind task_ = TaskKind::visual;
    std::string prefix_;
    Shape in_shape_, out_shape_;
    int layers_ = 1;
    int kernel_ = 3;
    bool norm_ = true;
    std::size_t hidden_ = 0;
    std::vector<ParamPtr> params_;
    ParamPtr p(const std::string& name) const;
};

enum class AdapterKind { automatic, identity };

// Shape bridge between a chain block and the fixed input/output contracts of
// the pretrained bundle. The forward direction either resizes feature maps
// (deconv upscale + crop conv), quantizes hidden sequences to token ids, or
// passes through; the return direction maps the encoder latent or the
// reconstruction back to the block's output shape.
class Adapter {
public:
    // `block_in` feeds the bundle (the fused connection consumes the block's
    // input); `block_out` is what the return direction must produce so the
    // two paths can be added.
    static Adapter build(const std::string& prefix, AdapterKind kind, bool dream,
                         const Shape& block_in, const Shape& block_out,
                         const AutoencoderBundle& bundle, std::uint64_t seed,
                         ParameterRegistry& reg);

    bool quantizes() const { return pre_ == PreMode::quantize; }
    Tensor pre(const Tensor& h) const;            // continuous pre modes
    IntTensor pre_tokens(const Tensor& h) const;  // quantize mode
    Tensor post(const Tensor& encoded) const;     // latent (sleep) or recon (dream)
    std::vector<LayerCost> cost() const;

    Adapter() = default;  // empty; assign from build()

private:
    enum class PreMode { identity, passthrough, visual_resize, quantize };
    enum class PostMode { identity, dense_from_latent, visual_downscale, textual_dense };

    std::string prefix_;
    PreMode pre_ = PreMode::identity;
    PostMode post_ = PostMode::identity;
    Shape in_shape_;      // per sample, block input
    Shape out_shape_;     // per sample, block output
    Shape bundle_in_;     // per sample
    Shape recon_shape_;   // per sample, dream only
    std::size_t latent_ = 0;
    // visual_resize geometry
    int up_stride_ = 1, crop_kernel_ = 1;
    // visual_downscale geometry
    int down_stride_ = 1, down_kernel_ = 1;
    std::vector<ParamPtr> params_;
    ParamPtr p(const std::string& name) const;
};

struct SleepForward {
    Tensor out;
    Tensor chain_path;
    Tensor encoder_path;
};

// Chain block fused with the frozen encoder: out = g(h) + adapt(phi(adapt(h))).
class SleepBlock {
public:
    static SleepBlock build(const std::string& prefix, ChainBlock chain, BundlePtr bundle,
                            AdapterKind akind, std::uint64_t seed, ParameterRegistry& reg);

    SleepForward forward(const Tensor& h) const;
    const ChainBlock& chain() const { return chain_; }
    std::vector<LayerCost> cost() const;

private:
    SleepBlock() = default;
    ChainBlock chain_;
    Adapter adapter_;
    BundlePtr bundle_;
};

struct DreamForward {
    Tensor out;
    Tensor chain_path;
    Tensor decoder_path;
    Tensor dream;             // reconstruction surfaced to the parallel branch
    Tensor adapted;           // pre-adapter output (continuous pre modes)
    IntTensor dream_tokens;   // textual bundles only
};

// Chain block fused with the full autoencoder. Besides the fused output, the
// reconstruction is tapped for the parallel refinement branch.
class DreamBlock {
public:
    static DreamBlock build(const std::string& prefix, ChainBlock chain, BundlePtr bundle,
                            AdapterKind akind, std::uint64_t seed, ParameterRegistry& reg);

    DreamForward forward(const Tensor& h) const;
    const ChainBlock& chain() const { return chain_; }
    Shape dream_shape() const;  // per sample
    std::vector<LayerCost> cost() const;

private:
    DreamBlock() = default;
    ChainBlock chain_;
    Adapter adapter_;
    BundlePtr bundle_;
};

// Parallel refinement stack shared by all dream taps: conv->norm->relu layers
// for the visual task, lstm->norm for the textual one, pooled to a fixed
// width vector per tap and summed across taps.
class DreamBranch {
public:
    static DreamBranch build(const std::string& prefix, TaskKind task, Shape dream_shape,
                             int layers, std::uint64_t seed, ParameterRegistry& reg);

    Tensor forward(const std::vector<Tensor>& dreams) const;
    std::size_t width() const { return width_; }
    std::vector<LayerCost> cost(std::size_t taps) const;

private:
    DreamBranch() = default;
    TaskKind task_ = TaskKind::visual;
    std::string prefix_;
    Shape dream_shape_;
    int layers_ = 2;
    std::size_t width_ = 0;
    std::vector<ParamPtr> params_;
    ParamPtr p(const std::string& name) const;
};

}  // namespace somnus

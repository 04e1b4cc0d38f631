#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "somnus/cost.hpp"
#include "somnus/data.hpp"
#include "somnus/optim.hpp"
#include "somnus/param.hpp"
#include "somnus/tensor.hpp"

namespace somnus {

// `zero` and `identity` are exact test stubs: the zero bundle encodes and
// reconstructs all-zeros, the identity bundle satisfies decode(encode(x)) == x
// bit for bit. They make the degenerate forms of the two fusion connections
// checkable bitwise.
enum class BundleKind { visual, textual, zero, identity };

const char* to_string(BundleKind k);

struct BundleManifest {
    std::uint32_t dataset_crc = 0;
    std::size_t samples = 0;
    int epochs = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::string objective;  // "mse", "cross_entropy" or "stub"
};

// Conv encoder / deconv decoder pair. Kernel 4, stride 2, padding 1 halves
// and doubles spatial dims exactly, so input height/width must divide by 4.
struct VisualAeArch {
    Shape input = {1, 32, 32};
    std::size_t c1 = 4;
    std::size_t c2 = 8;
    std::size_t latent = 32;
};

// Embedding -> LSTM encoder to a latent vector; LSTM decoder conditioned on
// the latent at every step, with two heads: vocabulary logits (pretraining,
// token dumps) and a sequence projected to embedding width (the surface the
// reconstruction-based fusion path consumes).
struct TextualAeArch {
    std::size_t seq_len = 16;
    std::size_t vocab = 50;
    std::size_t embed = 16;
    std::size_t hidden = 24;
    std::size_t latent = 24;
};

class AutoencoderBundle {
public:
    static AutoencoderBundle make_visual(const VisualAeArch& arch, std::uint64_t seed);
    static AutoencoderBundle make_textual(const TextualAeArch& arch, std::uint64_t seed);
    // input_shape is the per-sample tensor shape the stub accepts. The
    // identity stub's latent is the flattened input size; the zero stub
    // defaults to that but accepts an override.
    static AutoencoderBundle make_stub(BundleKind kind, Shape input_shape,
                                       std::size_t latent_dim = 0);

    BundleKind kind() const { return kind_; }
    bool is_stub() const {
        return kind_ == BundleKind::zero || kind_ == BundleKind::identity;
    }
    std::size_t latent_dim() const { return latent_; }

    // Per-sample input contract: (C,H,W) for visual and stubs' declared
    // shape; (T) token ids for textual.
    const Shape& input_shape() const { return input_shape_; }
    // Per-sample shape of reconstruct(): equals input_shape except for the
    // textual bundle, whose reconstruction surface is (T, embed).
    Shape recon_shape() const;

    const BundleManifest& manifest() const { return manifest_; }
    BundleManifest& manifest() { return manifest_; }

    // Latent a = phi(x) for batched tensors (B, *input_shape).
    Tensor encode(const Tensor& x) const;
    Tensor encode_tokens(const IntTensor& ids) const;

    // Full pass theta(phi(x)); shape (B, *recon_shape).
    Tensor reconstruct(const Tensor& x) const;

    struct TextRecon {
        Tensor seq;        // (B,T,E)
        IntTensor tokens;  // (B,T) greedy vocabulary readout
    };
    TextRecon reconstruct_tokens(const IntTensor& ids) const;

    // Per-position vocabulary logits ((B*T), V) of the reconstruction;
    // the textual pretraining objective.
    Tensor textual_recon_logits(const IntTensor& ids) const;

    std::vector<ParamPtr> encoder_params() const;
    // Reconstruction-path decoder parameters. The vocabulary head is not
    // included: it is unreachable from a classifier forward pass.
    std::vector<ParamPtr> decoder_params() const;
    std::vector<ParamPtr> all_params() const;

    void set_frozen(bool frozen);
    bool frozen() const { return frozen_; }

    const VisualAeArch& visual_arch() const { return varch_; }
    const TextualAeArch& textual_arch() const { return tarch_; }

    std::vector<LayerCost> encoder_cost() const;
    std::vector<LayerCost> decoder_cost() const;

private:
    AutoencoderBundle() = default;

    Tensor textual_decode_hidden(const Tensor& latent) const;

    BundleKind kind_ = BundleKind::zero;
    Shape input_shape_;
    std::size_t latent_ = 0;
    bool frozen_ = true;
    BundleManifest manifest_;
    VisualAeArch varch_;
    TextualAeArch tarch_;
    std::vector<ParamPtr> enc_params_;
    std::vector<ParamPtr> dec_params_;    // recon path
    std::vector<ParamPtr> vocab_params_;  // textual pretraining head
    ParamPtr p(const char* name) const;
};

using BundlePtr = std::shared_ptr<AutoencoderBundle>;

struct AeConfig {
    VisualAeArch visual;
    TextualAeArch textual;
};

struct PretrainResult {
    BundlePtr bundle;
    std::vector<double> epoch_losses;  // held-out loss after each epoch
};

// Self-supervised pretraining on the dataset's inputs (labels ignored).
// heldout may be null, in which case the training set is also the
// evaluation set for the recorded losses. Aborts with DivergenceError if
// the loss goes non-finite.
PretrainResult pretrain(const Dataset& train, const Dataset* heldout,
                        const AeConfig& arch, const OptimizerConfig& opt);

void save_bundle(const AutoencoderBundle& bundle, const std::string& path);
BundlePtr load_bundle(const std::string& path);

// Manifest round trip without parameter data; model files embed this JSON so
// a trained classifier can rebuild its bundle skeleton on load.
std::string bundle_manifest_json(const AutoencoderBundle& bundle);
BundlePtr bundle_from_manifest_json(const std::string& manifest,
                                    const std::string& context);

}  // namespace somnus

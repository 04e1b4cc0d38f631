#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "somnus/autoencoder.hpp"
#include "somnus/blocks.hpp"
#include "somnus/cost.hpp"
#include "somnus/data.hpp"
#include "somnus/param.hpp"

namespace somnus {

enum class Variant { chain_only, sleep, dream };
enum class MergeMode { concat, add };

const char* to_string(Variant v);

struct ModelConfig {
    TaskKind task = TaskKind::visual;
    Variant variant = Variant::chain_only;
    std::size_t blocks = 2;  // M
    std::size_t classes = 4;
    MergeMode merge = MergeMode::concat;
    AdapterKind adapter = AdapterKind::automatic;

    // visual geometry
    Shape input = {1, 32, 32};
    std::size_t stem_channels = 8;
    int stem_stride = 1;  // 1 (kernel 3) or 2 (kernel 4)
    int block_layers = 1;
    int kernel = 3;

    // textual geometry
    std::size_t seq_len = 32;
    std::size_t vocab = 2000;
    std::size_t hidden = 64;

    int branch_layers = 2;
};

struct ForwardTrace {
    std::vector<Tensor> block_inputs;
    std::vector<Tensor> block_outputs;
    std::vector<Tensor> dreams;
    std::vector<IntTensor> dream_tokens;
    std::vector<Tensor> adapted;
    Tensor main_feature;
    Tensor branch_feature;
    Tensor logits;
};

// A fully assembled classifier: stem, M chain/sleep/dream blocks, optional
// parallel dream branch, dense softmax head, and the registry holding every
// reachable parameter exactly once (shared bundle parameters included once).
class BlockGraph {
public:
    // bundle must be present iff variant != chain_only. Shapes are checked
    // exhaustively at build time; forward never re-derives geometry.
    static BlockGraph build(const ModelConfig& cfg, BundlePtr bundle,
                            std::uint64_t seed);

    // Per-sample shape flowing between blocks (the stem output); what a
    // stub bundle must declare as its input shape.
    static Shape block_shape_for(const ModelConfig& cfg);

    Tensor forward(const Batch& batch, ForwardTrace* trace = nullptr) const;

    const ModelConfig& config() const { return cfg_; }
    TaskKind task() const { return cfg_.task; }
    Variant variant() const { return cfg_.variant; }
    std::size_t block_count() const { return cfg_.blocks; }
    std::string model_id() const;

    ParameterRegistry& registry() { return registry_; }
    const ParameterRegistry& registry() const { return registry_; }
    BundlePtr bundle() const { return bundle_; }

    const std::vector<ChainBlock>& chain_blocks() const { return chain_blocks_; }
    const std::vector<SleepBlock>& sleep_blocks() const { return sleep_blocks_; }
    const std::vector<DreamBlock>& dream_blocks() const { return dream_blocks_; }

    Tensor stem(const Batch& batch) const;

    CostReport cost_report() const;

private:
    BlockGraph() = default;

    ModelConfig cfg_;
    Shape block_shape_;
    ParameterRegistry registry_;
    BundlePtr bundle_;
    std::vector<ChainBlock> chain_blocks_;
    std::vector<SleepBlock> sleep_blocks_;
    std::vector<DreamBlock> dream_blocks_;
    std::unique_ptr<DreamBranch> branch_;
    std::vector<ParamPtr> stem_params_;
    std::vector<ParamPtr> head_params_;
    std::size_t head_width_ = 0;
    ParamPtr p(const std::string& name) const;
};

}  // namespace somnus

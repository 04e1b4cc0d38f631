#include "somnus/model.hpp"

#include <iostream>

#include "somnus/error.hpp"
#include "somnus/ops.hpp"

namespace somnus {

const char* to_string(Variant v) {
    switch (v) {
        case Variant::chain_only: return "chain";
        case Variant::sleep: return "sleep";
        case Variant::dream: return "dream";
    }
    return "?";
}

ParamPtr BlockGraph::p(const std::string& name) const {
    ParamPtr q = registry_.find(name);
    if (!q) throw BuildError("model: missing parameter '" + name + "'");
    return q;
}

Shape BlockGraph::block_shape_for(const ModelConfig& cfg) {
    if (cfg.task == TaskKind::visual) {
        if (cfg.input.size() != 3) {
            throw BuildError("model: visual input must be (C,H,W), got " +
                             shape_str(cfg.input));
        }
        const std::size_t h = cfg.input[1], w = cfg.input[2];
        if (cfg.stem_stride == 1) return {cfg.stem_channels, h, w};
        if (cfg.stem_stride == 2) {
            if (h % 2 != 0 || w % 2 != 0) {
                throw BuildError("model: stride-2 stem needs even input dims, got " +
                                 shape_str(cfg.input));
            }
            return {cfg.stem_channels, h / 2, w / 2};
        }
        throw BuildError("model: stem stride must be 1 or 2");
    }
    return {cfg.seq_len, cfg.hidden};
}

BlockGraph BlockGraph::build(const ModelConfig& cfg, BundlePtr bundle,
                             std::uint64_t seed) {
    if (cfg.blocks < 1) throw BuildError("model: block count must be >= 1");
    if (cfg.blocks > 4) {
        std::cerr << "somnus: warning: " << cfg.blocks
                  << " blocks is outside the studied range 1..4\n";
    }
    if (cfg.classes < 2) throw BuildError("model: need at least 2 classes");
    if (cfg.variant == Variant::chain_only) {
        if (bundle) throw BuildError("model: chain-only variant does not take a bundle");
    } else {
        if (!bundle) {
            throw BuildError(std::string("model: ") + to_string(cfg.variant) +
                             " variant requires a pretrained bundle or stub");
        }
        const BundleKind bk = bundle->kind();
        const bool ok = bk == BundleKind::zero || bk == BundleKind::identity ||
                        (cfg.task == TaskKind::visual && bk == BundleKind::visual) ||
                        (cfg.task == TaskKind::textual && bk == BundleKind::textual);
        if (!ok) {
            throw BuildError(std::string("model: ") + to_string(bk) +
                             " bundle cannot serve a " + to_string(cfg.task) + " model");
        }
    }

    BlockGraph g;
    g.cfg_ = cfg;
    g.bundle_ = std::move(bundle);
    g.block_shape_ = block_shape_for(cfg);

    // Stem.
    if (cfg.task == TaskKind::visual) {
        const std::size_t cin = cfg.input[0];
        const std::size_t k = cfg.stem_stride == 2 ? 4 : 3;
        g.stem_params_.push_back(g.registry_.add(make_param(
            "stem/conv/w", {cfg.stem_channels, cin, k, k},
            InitSpec::fan_in(cin * k * k), seed)));
        g.stem_params_.push_back(g.registry_.add(
            make_param("stem/conv/b", {cfg.stem_channels}, InitSpec::zeros(), seed)));
        g.stem_params_.push_back(g.registry_.add(
            make_param("stem/norm/gain", {cfg.stem_channels}, InitSpec::ones(), seed)));
        g.stem_params_.push_back(g.registry_.add(
            make_param("stem/norm/bias", {cfg.stem_channels}, InitSpec::zeros(), seed)));
    } else {
        if (cfg.vocab < 2) throw BuildError("model: vocabulary too small");
        g.stem_params_.push_back(g.registry_.add(make_param(
            "stem/embed", {cfg.vocab, cfg.hidden}, InitSpec::fan_in(cfg.hidden), seed)));
    }

    // Blocks.
    for (std::size_t m = 0; m < cfg.blocks; ++m) {
        const std::string prefix = "block" + std::to_string(m + 1);
        ChainBlock chain =
            cfg.task == TaskKind::visual
                ? ChainBlock::make_visual(prefix + "/chain", g.block_shape_,
                                          cfg.stem_channels, cfg.block_layers,
                                          cfg.kernel, true, seed, g.registry_)
                : ChainBlock::make_textual(prefix + "/chain", cfg.seq_len, cfg.hidden,
                                           true, seed, g.registry_);
        switch (cfg.variant) {
            case Variant::chain_only:
                g.chain_blocks_.push_back(std::move(chain));
                break;
            case Variant::sleep:
                g.sleep_blocks_.push_back(SleepBlock::build(
                    prefix, std::move(chain), g.bundle_, cfg.adapter, seed, g.registry_));
                break;
            case Variant::dream:
                g.dream_blocks_.push_back(DreamBlock::build(
                    prefix, std::move(chain), g.bundle_, cfg.adapter, seed, g.registry_));
                break;
        }
    }

    // Shared bundle parameters enter the registry exactly once, and only the
    // ones reachable from a classifier forward pass.
    if (cfg.variant == Variant::sleep) {
        for (const auto& q : g.bundle_->encoder_params()) g.registry_.add(q);
    } else if (cfg.variant == Variant::dream) {
        for (const auto& q : g.bundle_->encoder_params()) g.registry_.add(q);
        for (const auto& q : g.bundle_->decoder_params()) g.registry_.add(q);
    }

    // Dream branch.
    std::size_t main_width =
        cfg.task == TaskKind::visual ? cfg.stem_channels : cfg.hidden;
    g.head_width_ = main_width;
    if (cfg.variant == Variant::dream) {
        g.branch_ = std::make_unique<DreamBranch>(
            DreamBranch::build("branch", cfg.task, g.dream_blocks_[0].dream_shape(),
                               cfg.branch_layers, seed, g.registry_));
        if (cfg.merge == MergeMode::concat) {
            g.head_width_ = main_width + g.branch_->width();
        } else {
            if (g.branch_->width() != main_width) {
                throw BuildError("model: merge=add needs branch width " +
                                 std::to_string(g.branch_->width()) +
                                 " == main width " + std::to_string(main_width) +
                                 "; use merge=concat");
            }
        }
    }

    // Head.
    g.head_params_.push_back(g.registry_.add(make_param(
        "head/fc/w", {g.head_width_, cfg.classes}, InitSpec::fan_in(g.head_width_), seed)));
    g.head_params_.push_back(g.registry_.add(
        make_param("head/fc/b", {cfg.classes}, InitSpec::zeros(), seed)));
    return g;
}

Tensor BlockGraph::stem(const Batch& batch) const {
    if (cfg_.task == TaskKind::visual) {
        if (!batch.images.defined()) {
            throw ShapeError("model: visual model needs an image batch");
        }
        Tensor h = conv2d(batch.images, p("stem/conv/w")->value, p("stem/conv/b")->value,
                          cfg_.stem_stride, 1);
        h = layer_norm2d(h, p("stem/norm/gain")->value, p("stem/norm/bias")->value, 1e-5);
        return relu(h);
    }
    if (!batch.tokens.defined()) {
        throw ShapeError("model: textual model needs a token batch");
    }
    return embedding_lookup(p("stem/embed")->value, batch.tokens);
}

Tensor BlockGraph::forward(const Batch& batch, ForwardTrace* trace) const {
    Tensor h = stem(batch);
    std::vector<Tensor> dreams;
    std::vector<IntTensor> dream_tokens;
    for (std::size_t m = 0; m < cfg_.blocks; ++m) {
        if (trace) trace->block_inputs.push_back(h);
        switch (cfg_.variant) {
            case Variant::chain_only:
                h = chain_blocks_[m].forward(h);
                break;
            case Variant::sleep:
                h = sleep_blocks_[m].forward(h).out;
                break;
            case Variant::dream: {
                DreamForward r = dream_blocks_[m].forward(h);
                h = r.out;
                dreams.push_back(r.dream);
                if (r.dream_tokens.defined()) dream_tokens.push_back(r.dream_tokens);
                if (trace && r.adapted.defined()) trace->adapted.push_back(r.adapted);
                break;
            }
        }
        if (trace) trace->block_outputs.push_back(h);
    }
    Tensor main_feat = cfg_.task == TaskKind::visual ? global_avg_pool2d(h)
                                                     : mean_over_time(h);
    Tensor feat = main_feat;
    Tensor branch_feat;
    if (cfg_.variant == Variant::dream) {
        branch_feat = branch_->forward(dreams);
        feat = cfg_.merge == MergeMode::concat ? concat_cols(main_feat, branch_feat)
                                               : add(main_feat, branch_feat);
    }
    Tensor logits = add_bias_rows(matmul(feat, p("head/fc/w")->value),
                                  p("head/fc/b")->value);
    if (trace) {
        trace->dreams = std::move(dreams);
        trace->dream_tokens = std::move(dream_tokens);
        trace->main_feature = main_feat;
        trace->branch_feature = branch_feat;
        trace->logits = logits;
    }
    return logits;
}

std::string BlockGraph::model_id() const {
    std::string base;
    switch (cfg_.variant) {
        case Variant::chain_only: base = "ChainNet-"; break;
        case Variant::sleep: base = "SleepNet-"; break;
        case Variant::dream: base = "DreamNet-"; break;
    }
    return base + std::to_string(cfg_.blocks);
}

CostReport BlockGraph::cost_report() const {
    CostReport report;
    report.model_id = model_id();

    LayerCost stem_cost;
    stem_cost.name = "stem";
    if (cfg_.task == TaskKind::visual) {
        const std::size_t cin = cfg_.input[0];
        const std::size_t k = cfg_.stem_stride == 2 ? 4 : 3;
        const std::size_t ho = block_shape_[1], wo = block_shape_[2];
        stem_cost.params_trainable = cost::conv2d_params(cin, cfg_.stem_channels, k) +
                                     cost::layer_norm_params(cfg_.stem_channels);
        stem_cost.flops = cost::conv2d_flops(cin, cfg_.stem_channels, k, ho, wo) +
                          cost::layer_norm_flops(1, cfg_.stem_channels * ho * wo) +
                          cost::relu_flops(cfg_.stem_channels * ho * wo);
    } else {
        stem_cost.params_trainable = cost::embedding_params(cfg_.vocab, cfg_.hidden);
        stem_cost.flops = 0;
    }
    report.items.push_back(std::move(stem_cost));

    for (std::size_t m = 0; m < cfg_.blocks; ++m) {
        std::vector<LayerCost> items;
        switch (cfg_.variant) {
            case Variant::chain_only: items = chain_blocks_[m].cost(); break;
            case Variant::sleep: items = sleep_blocks_[m].cost(); break;
            case Variant::dream: items = dream_blocks_[m].cost(); break;
        }
        report.items.insert(report.items.end(), items.begin(), items.end());
    }

    // The shared bundle is counted once in parameters; its forward cost is
    // paid once per block.
    if (cfg_.variant != Variant::chain_only) {
        const auto uses = static_cast<long long>(cfg_.blocks);
        for (auto item : bundle_->encoder_cost()) {
            item.name = "bundle/" + item.name;
            item.flops *= uses;
            report.items.push_back(std::move(item));
        }
        if (cfg_.variant == Variant::dream) {
            for (auto item : bundle_->decoder_cost()) {
                item.name = "bundle/" + item.name;
                item.flops *= uses;
                report.items.push_back(std::move(item));
            }
        }
    }

    if (cfg_.variant == Variant::dream) {
        auto items = branch_->cost(cfg_.blocks);
        report.items.insert(report.items.end(), items.begin(), items.end());
    }

    LayerCost pool;
    pool.name = "head/pool";
    pool.flops = cfg_.task == TaskKind::visual
                     ? cost::avg_pool2d_flops(block_shape_[0], block_shape_[1],
                                              block_shape_[2])
                     : cost::mean_time_flops(cfg_.seq_len, cfg_.hidden);
    report.items.push_back(std::move(pool));

    LayerCost head;
    head.name = "head/fc";
    head.params_trainable = cost::dense_params(head_width_, cfg_.classes);
    head.flops = cost::dense_flops(head_width_, cfg_.classes);
    report.items.push_back(std::move(head));
    return report;
}

}  // namespace somnus

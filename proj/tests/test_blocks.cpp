#include <doctest.h>

#include <cmath>

#include "somnus/blocks.hpp"
#include "somnus/error.hpp"
#include "somnus/ops.hpp"
#include "support/oracles.hpp"

using namespace somnus;

namespace {

BundlePtr tiny_visual_bundle(std::uint64_t seed, Shape input = {1, 8, 8},
                             std::size_t latent = 6) {
    VisualAeArch arch;
    arch.input = std::move(input);
    arch.c1 = 2;
    arch.c2 = 3;
    arch.latent = latent;
    auto b = std::make_shared<AutoencoderBundle>(
        AutoencoderBundle::make_visual(arch, seed));
    b->set_frozen(true);
    return b;
}

BundlePtr tiny_textual_bundle(std::uint64_t seed, std::size_t t = 6,
                              std::size_t vocab = 20) {
    TextualAeArch arch;
    arch.seq_len = t;
    arch.vocab = vocab;
    arch.embed = 5;
    arch.hidden = 7;
    arch.latent = 6;
    auto b = std::make_shared<AutoencoderBundle>(
        AutoencoderBundle::make_textual(arch, seed));
    b->set_frozen(true);
    return b;
}

}  // namespace

TEST_CASE("chain block: identity 1x1 convs without norm reduce to relu") {
    ParameterRegistry reg;
    ChainBlock blk = ChainBlock::make_visual("blk", {2, 4, 4}, 2, 1, 1, false, 0, reg);
    auto w = reg.find("blk/conv0/w");
    REQUIRE(w != nullptr);
    std::fill(w->value.data().begin(), w->value.data().end(), 0.0);
    w->value.data()[0 * 2 * 1 * 1 + 0] = 1.0;  // out 0 <- in 0
    w->value.data()[1 * 2 * 1 * 1 + 1] = 1.0;  // out 1 <- in 1

    Rng rng(1);
    Tensor h = oracle::random_tensor({2, 2, 4, 4}, rng);
    Tensor expect = relu(h);
    CHECK(blk.forward(h).data() == expect.data());
}

TEST_CASE("chain block: zero input with zero biases yields zero output") {
    ParameterRegistry reg;
    ChainBlock vis = ChainBlock::make_visual("v", {1, 6, 6}, 3, 2, 3, true, 5, reg);
    Tensor out = vis.forward(Tensor::zeros({2, 1, 6, 6}));
    for (double v : out.data()) CHECK(v == 0.0);

    ParameterRegistry reg2;
    ChainBlock txt = ChainBlock::make_textual("t", 5, 4, true, 5, reg2);
    Tensor out2 = txt.forward(Tensor::zeros({2, 5, 4}));
    for (double v : out2.data()) CHECK(v == 0.0);
}

TEST_CASE("chain block: static shape inference matches observed shapes") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t cin = 1 + rng.below(3);
        const std::size_t h = 3 + rng.below(4);
        const std::size_t w = 3 + rng.below(4);
        const std::size_t channels = 1 + rng.below(4);
        const int layers = 1 + static_cast<int>(rng.below(2));
        const int kernel = rng.below(2) == 0 ? 1 : 3;
        ParameterRegistry reg;
        ChainBlock blk = ChainBlock::make_visual("b" + std::to_string(trial), {cin, h, w},
                                                 channels, layers, kernel, true,
                                                 trial, reg);
        Tensor x = oracle::random_tensor({2, cin, h, w}, rng);
        Tensor y = blk.forward(x);
        Shape expect = {2};
        expect.insert(expect.end(), blk.out_shape().begin(), blk.out_shape().end());
        CHECK(y.shape() == expect);
    }
}

TEST_CASE("sleep block with the zero stub is bitwise the plain chain block") {
    ParameterRegistry reg;
    ChainBlock chain = ChainBlock::make_visual("block1/chain", {2, 6, 6}, 2, 1, 3, true,
                                               33, reg);
    auto stub = std::make_shared<AutoencoderBundle>(
        AutoencoderBundle::make_stub(BundleKind::zero, chain.in_shape()));
    SleepBlock sleep = SleepBlock::build("block1", chain, stub,
                                         AdapterKind::automatic, 33, reg);
    Rng rng(4);
    Tensor h = oracle::random_tensor({2, 2, 6, 6}, rng);
    SleepForward r = sleep.forward(h);
    CHECK(r.out.data() == chain.forward(h).data());
    for (double v : r.encoder_path.data()) CHECK(v == 0.0);
}

TEST_CASE("sleep block with a zeroed chain leaves only the encoder path") {
    ParameterRegistry reg;
    ChainBlock chain = ChainBlock::make_visual("block1/chain", {1, 8, 8}, 1, 1, 3, true,
                                               35, reg);
    BundlePtr bundle = tiny_visual_bundle(36);
    SleepBlock sleep = SleepBlock::build("block1", chain, bundle,
                                         AdapterKind::automatic, 35, reg);
    // Zero every chain parameter; norm gains included, so g(h) == 0 exactly.
    for (const auto& q : reg.all()) {
        if (q->name.rfind("block1/chain/", 0) == 0) {
            std::fill(q->value.data().begin(), q->value.data().end(), 0.0);
        }
    }
    // Make the post adapter non-trivial so the encoder path is nonzero.
    auto post_w = reg.find("block1/adapter/post/fc/w");
    REQUIRE(post_w != nullptr);

    Rng rng(6);
    Tensor h = oracle::random_tensor({1, 1, 8, 8}, rng);
    SleepForward r = sleep.forward(h);
    for (double v : r.chain_path.data()) CHECK(v == 0.0);
    CHECK(r.out.data() == r.encoder_path.data());

    // Addition commutes bitwise.
    CHECK(add(r.chain_path, r.encoder_path).data() ==
          add(r.encoder_path, r.chain_path).data());
}

TEST_CASE("dream block: identity stub with identity adapters is a residual connection") {
    ParameterRegistry reg;
    ChainBlock chain = ChainBlock::make_visual("block1/chain", {2, 5, 5}, 2, 1, 3, true,
                                               41, reg);
    auto stub = std::make_shared<AutoencoderBundle>(
        AutoencoderBundle::make_stub(BundleKind::identity, chain.in_shape()));
    DreamBlock dream = DreamBlock::build("block1", chain, stub, AdapterKind::identity,
                                         41, reg);
    Rng rng(7);
    Tensor h = oracle::random_tensor({3, 2, 5, 5}, rng);
    DreamForward r = dream.forward(h);
    CHECK(r.out.data() == add(chain.forward(h), h).data());
    CHECK(r.dream.data() == h.data());
    CHECK(r.adapted.data() == h.data());
}

TEST_CASE("dream block with the zero stub: output is the chain path, dream is zero") {
    ParameterRegistry reg;
    ChainBlock chain = ChainBlock::make_textual("block1/chain", 6, 7, true, 43, reg);
    auto stub = std::make_shared<AutoencoderBundle>(
        AutoencoderBundle::make_stub(BundleKind::zero, chain.in_shape()));
    DreamBlock dream = DreamBlock::build("block1", chain, stub, AdapterKind::automatic,
                                         43, reg);
    Rng rng(8);
    Tensor h = oracle::random_tensor({2, 6, 7}, rng);
    DreamForward r = dream.forward(h);
    CHECK(r.out.data() == chain.forward(h).data());
    for (double v : r.dream.data()) CHECK(v == 0.0);
    CHECK(r.dream.shape() == h.shape());
}

TEST_CASE("dream block tap shape equals the bundle reconstruction shape") {
    ParameterRegistry reg;
    ChainBlock chain = ChainBlock::make_visual("block1/chain", {2, 4, 4}, 2, 1, 3, true,
                                               47, reg);
    BundlePtr bundle = tiny_visual_bundle(48);
    DreamBlock dream = DreamBlock::build("block1", chain, bundle,
                                         AdapterKind::automatic, 47, reg);
    Rng rng(9);
    Tensor h = oracle::random_tensor({2, 2, 4, 4}, rng);
    DreamForward r = dream.forward(h);
    CHECK(r.dream.shape() == Shape{2, 1, 8, 8});
    CHECK(dream.dream_shape() == Shape{1, 8, 8});
    CHECK(r.out.shape() == Shape{2, 2, 4, 4});
}

TEST_CASE("quantize_sequence: dominant column, valid range") {
    Rng rng(10);
    Tensor hidden = oracle::random_tensor({2, 4, 3}, rng, 0.1, 0.9);
    Tensor proj = Tensor::zeros({3, 5});
    proj.data()[0 * 5 + 2] = 50.0;  // positive hidden values force id 2
    IntTensor ids = quantize_sequence(hidden, proj);
    CHECK(ids.shape() == Shape{2, 4});
    for (std::int64_t t : ids.data()) CHECK(t == 2);

    Tensor proj2 = oracle::random_tensor({3, 5}, rng);
    IntTensor ids2 = quantize_sequence(hidden, proj2);
    for (std::int64_t t : ids2.data()) {
        CHECK(t >= 0);
        CHECK(t < 5);
    }
}

TEST_CASE("textual sleep block: quantized path carries no gradient") {
    ParameterRegistry reg;
    ChainBlock chain = ChainBlock::make_textual("block1/chain", 6, 7, true, 53, reg);
    BundlePtr bundle = tiny_textual_bundle(54);
    bundle->set_frozen(false);  // gradients may flow into bundle parameters
    SleepBlock sleep = SleepBlock::build("block1", chain, bundle,
                                         AdapterKind::automatic, 53, reg);
    Rng rng(11);
    Tensor h = oracle::random_tensor({2, 6, 7}, rng);
    h.set_requires_grad(true);

    SleepForward r = sleep.forward(h);

    // Loss through the encoder path only: the argmax boundary blocks every
    // gradient into the block input and into the quantizer projection.
    backward(sum_all(r.encoder_path));
    CHECK_FALSE(h.has_grad());
    auto proj = reg.find("block1/adapter/quantizer/proj");
    REQUIRE(proj != nullptr);
    CHECK_FALSE(proj->value.has_grad());
    // The (unfrozen) encoder parameters behind the boundary do learn.
    bool bundle_grad = false;
    for (const auto& q : bundle->encoder_params()) {
        bundle_grad = bundle_grad || q->value.has_grad();
    }
    CHECK(bundle_grad);

    // Loss through the chain path reaches the input.
    h.clear_grad();
    SleepForward r2 = sleep.forward(h);
    backward(sum_all(r2.chain_path));
    REQUIRE(h.has_grad());
    double mag = 0.0;
    for (double v : h.grad()) mag += std::abs(v);
    CHECK(mag > 0.0);
}

TEST_CASE("visual sleep block: frozen bundle gets no gradient, adapters do") {
    ParameterRegistry reg;
    ChainBlock chain = ChainBlock::make_visual("block1/chain", {1, 8, 8}, 1, 1, 3, true,
                                               59, reg);
    BundlePtr bundle = tiny_visual_bundle(60);
    SleepBlock sleep = SleepBlock::build("block1", chain, bundle,
                                         AdapterKind::automatic, 59, reg);
    Rng rng(12);
    Tensor h = oracle::random_tensor({2, 1, 8, 8}, rng);
    backward(sum_all(sleep.forward(h).out));

    for (const auto& q : bundle->encoder_params()) {
        CHECK_FALSE(q->value.has_grad());
    }
    for (const char* name : {"block1/chain/conv0/w", "block1/adapter/pre/deconv/w",
                             "block1/adapter/post/fc/w"}) {
        INFO("parameter ", name);
        auto q = reg.find(name);
        REQUIRE(q != nullptr);
        REQUIRE(q->value.has_grad());
        double mag = 0.0;
        for (double v : q->value.grad()) mag += std::abs(v);
        CHECK(mag > 0.0);
    }

    SUBCASE("unfrozen bundle receives gradients through the same path") {
        bundle->set_frozen(false);
        reg.zero_grad();
        backward(sum_all(sleep.forward(h).out));
        bool any = false;
        for (const auto& q : bundle->encoder_params()) {
            any = any || q->value.has_grad();
        }
        CHECK(any);
    }
}

TEST_CASE("dream branch: zero dreams give a zero vector; taps commute") {
    ParameterRegistry reg;
    DreamBranch branch = DreamBranch::build("branch", TaskKind::visual, {2, 4, 4}, 2,
                                            61, reg);
    CHECK(branch.width() == 2);
    Tensor zero_out = branch.forward({Tensor::zeros({3, 2, 4, 4}),
                                      Tensor::zeros({3, 2, 4, 4})});
    for (double v : zero_out.data()) CHECK(v == 0.0);

    Rng rng(13);
    Tensor d1 = oracle::random_tensor({3, 2, 4, 4}, rng);
    Tensor d2 = oracle::random_tensor({3, 2, 4, 4}, rng);
    CHECK(branch.forward({d1, d2}).data() == branch.forward({d2, d1}).data());
    CHECK(branch.forward({d1}).shape() == Shape{3, 2});

    CHECK_THROWS_AS(branch.forward({}), ShapeError);
}

TEST_CASE("adapter build failures name the offending boundary") {
    ParameterRegistry reg;
    ChainBlock chain = ChainBlock::make_visual("block1/chain", {2, 6, 6}, 2, 1, 3, true,
                                               67, reg);
    auto stub = std::make_shared<AutoencoderBundle>(
        AutoencoderBundle::make_stub(BundleKind::zero, Shape{2, 5, 5}));
    CHECK_THROWS_WITH_AS(
        SleepBlock::build("block1", chain, stub, AdapterKind::automatic, 67, reg),
        "block1/adapter: stub bundle declares input [2,5,5] but block input is [2,6,6]",
        BuildError);

    ParameterRegistry reg2;
    ChainBlock chain2 = ChainBlock::make_visual("block2/chain", {2, 6, 6}, 2, 1, 3, true,
                                                68, reg2);
    BundlePtr bundle = tiny_visual_bundle(69);  // expects (1,8,8) input
    CHECK_THROWS_AS(SleepBlock::build("block2", chain2, bundle, AdapterKind::identity,
                                      68, reg2),
                    BuildError);
}

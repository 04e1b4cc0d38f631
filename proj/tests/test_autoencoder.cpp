#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "somnus/autoencoder.hpp"
#include "somnus/error.hpp"
#include "somnus/ops.hpp"
#include "somnus/serialize.hpp"
#include "support/oracles.hpp"

using namespace somnus;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "somnus_ae_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

Dataset repeated_sample_set(std::size_t copies) {
    Dataset base = gen_synthetic_images(ImageKind::shapes2, 1, 0.0, 3, 8);
    Dataset d = base;
    for (std::size_t i = 1; i < copies; ++i) {
        d.images.push_back(base.images[0]);
        d.labels.push_back(base.labels[0]);
    }
    return d;
}

}  // namespace

TEST_CASE("pretrain memorizes a single repeated sample (overcomplete latent)") {
    Dataset d = repeated_sample_set(8);
    AeConfig arch;
    arch.visual.c1 = 4;
    arch.visual.c2 = 8;
    arch.visual.latent = 64;  // >= 1*8*8 input dim
    OptimizerConfig opt;
    opt.epochs = 200;
    opt.batch_size = 8;
    opt.seed = 1;
    auto result = pretrain(d, nullptr, arch, opt);
    CHECK(result.bundle->manifest().final_loss < 1e-3);
}

TEST_CASE("pretrain with zero epochs records the initial loss") {
    Dataset d = gen_synthetic_images(ImageKind::shapes2, 8, 0.1, 5, 8);
    AeConfig arch;
    arch.visual.latent = 8;
    OptimizerConfig opt;
    opt.epochs = 0;
    opt.seed = 2;
    auto result = pretrain(d, nullptr, arch, opt);
    CHECK(result.bundle->manifest().final_loss == result.bundle->manifest().initial_loss);
    CHECK(result.epoch_losses.empty());
}

TEST_CASE("pretrain on the 8x8 two-shape set: held-out MSE and loss curve") {
    Dataset train = gen_synthetic_images(ImageKind::shapes2, 64, 0.05, 7, 8);
    Dataset heldout = gen_synthetic_images(ImageKind::shapes2, 16, 0.05, 8, 8);
    AeConfig arch;
    arch.visual.c1 = 4;
    arch.visual.c2 = 8;
    arch.visual.latent = 16;
    OptimizerConfig opt;
    opt.epochs = 100;
    opt.batch_size = 16;
    opt.seed = 3;
    auto result = pretrain(train, &heldout, arch, opt);
    const auto& man = result.bundle->manifest();
    CHECK(man.final_loss < 0.05);
    CHECK(man.final_loss < man.initial_loss);

    // Loss is non-increasing up to 5% transient upticks.
    double best = man.initial_loss;
    for (double l : result.epoch_losses) {
        CHECK(l <= best * 1.05);
        best = std::min(best, l);
    }

    // Reconstruction of training inputs stays within 3x the recorded loss.
    std::vector<std::size_t> all(train.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    Batch b = train.batch(all);
    const double train_mse =
        mse(result.bundle->reconstruct(b.images), b.images).item();
    CHECK(train_mse <= man.final_loss * 3.0);

    // Dependents rely on theta(phi(x)) preserving the input shape.
    CHECK(result.bundle->reconstruct(b.images).shape() == b.images.shape());

    SUBCASE("save/load round trip is bitwise") {
        const auto path = (temp_dir() / "two_shape.slpn").string();
        const auto path2 = (temp_dir() / "two_shape_resaved.slpn").string();
        save_bundle(*result.bundle, path);
        BundlePtr loaded = load_bundle(path);
        save_bundle(*loaded, path2);
        CHECK(read_file(path) == read_file(path2));

        Batch one = train.single(0);
        CHECK(loaded->encode(one.images).data() ==
              result.bundle->encode(one.images).data());

        // Truncation must be caught by the trailing checksum.
        auto bytes = read_file(path);
        bytes.resize(bytes.size() - 9);
        const auto broken = (temp_dir() / "broken.slpn").string();
        write_file(broken, bytes);
        CHECK_THROWS_AS(load_bundle(broken), FormatError);
    }
}

TEST_CASE("encode: zero-weight bundle maps everything to the zero latent") {
    VisualAeArch arch;
    arch.input = {1, 8, 8};
    arch.latent = 6;
    auto bundle = AutoencoderBundle::make_visual(arch, 11);
    for (const auto& p : bundle.all_params()) {
        std::fill(p->value.data().begin(), p->value.data().end(), 0.0);
    }
    Rng rng(1);
    Tensor x = oracle::random_tensor({2, 1, 8, 8}, rng);
    Tensor z = bundle.encode(x);
    CHECK(z.shape() == Shape{2, 6});
    for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("encode is deterministic and shape-stable over batch sizes") {
    VisualAeArch arch;
    arch.input = {1, 8, 8};
    arch.latent = 5;
    auto bundle = AutoencoderBundle::make_visual(arch, 21);
    Rng rng(2);
    for (std::size_t b : {1, 3, 7}) {
        Tensor x = oracle::random_tensor({b, 1, 8, 8}, rng);
        Tensor z1 = bundle.encode(x);
        Tensor z2 = bundle.encode(x);
        CHECK(z1.shape() == Shape{b, 5});
        CHECK(z1.data() == z2.data());
    }
    CHECK_THROWS_AS(bundle.encode(Tensor::zeros({2, 1, 4, 8})), ShapeError);
}

TEST_CASE("stub bundles: zero and identity contracts") {
    Rng rng(3);
    Tensor x = oracle::random_tensor({2, 3, 4}, rng);  // batch of (3,4)

    auto zero = AutoencoderBundle::make_stub(BundleKind::zero, {3, 4});
    Tensor rz = zero.reconstruct(x);
    CHECK(rz.shape() == x.shape());
    for (double v : rz.data()) CHECK(v == 0.0);
    Tensor ez = zero.encode(x);
    CHECK(ez.shape() == Shape{2, 12});
    for (double v : ez.data()) CHECK(v == 0.0);

    auto ident = AutoencoderBundle::make_stub(BundleKind::identity, {3, 4});
    CHECK(ident.latent_dim() == 12);
    CHECK(ident.reconstruct(x).data() == x.data());
    CHECK(ident.encode(x).shape() == Shape{2, 12});

    CHECK(zero.all_params().empty());
    CHECK(ident.frozen());
    CHECK_THROWS_AS(AutoencoderBundle::make_stub(BundleKind::identity, {3, 4}, 5),
                    BuildError);
    CHECK_THROWS_AS(AutoencoderBundle::make_stub(BundleKind::visual, {3, 4}), BuildError);
}

TEST_CASE("textual pretraining improves reconstruction and emits valid tokens") {
    Dataset train = gen_synthetic_text(TextKind::keyword2, 48, 30, 8, 13);
    AeConfig arch;
    arch.textual.embed = 8;
    arch.textual.hidden = 12;
    arch.textual.latent = 10;
    OptimizerConfig opt;
    opt.epochs = 8;
    opt.batch_size = 16;
    opt.seed = 4;
    opt.lr = 0.002;
    auto result = pretrain(train, nullptr, arch, opt);
    const auto& man = result.bundle->manifest();
    CHECK(man.objective == "cross_entropy");
    CHECK(man.final_loss < man.initial_loss);

    Batch b = train.batch({0, 1, 2});
    auto recon = result.bundle->reconstruct_tokens(b.tokens);
    CHECK(recon.seq.shape() == Shape{3, 8, 8});
    CHECK(recon.tokens.shape() == Shape{3, 8});
    for (std::int64_t t : recon.tokens.data()) {
        CHECK(t >= 0);
        CHECK(t < 30);
    }
    CHECK(result.bundle->recon_shape() == Shape{8, 8});

    SUBCASE("textual bundle round trip") {
        const auto path = (temp_dir() / "textual.slpn").string();
        save_bundle(*result.bundle, path);
        BundlePtr loaded = load_bundle(path);
        auto again = loaded->reconstruct_tokens(b.tokens);
        CHECK(again.seq.data() == recon.seq.data());
        CHECK(again.tokens.data() == recon.tokens.data());
    }
}

TEST_CASE("pretrain memorizes a repeated token sequence") {
    Dataset base = gen_synthetic_text(TextKind::keyword2, 1, 20, 6, 17);
    Dataset d = base;
    for (int i = 0; i < 7; ++i) {
        d.tokens.push_back(base.tokens[0]);
        d.labels.push_back(base.labels[0]);
    }
    AeConfig arch;
    arch.textual.embed = 8;
    arch.textual.hidden = 16;
    arch.textual.latent = 16;
    OptimizerConfig opt;
    opt.epochs = 300;
    opt.batch_size = 8;
    opt.seed = 5;
    opt.lr = 0.01;
    auto result = pretrain(d, nullptr, arch, opt);
    CHECK(result.bundle->manifest().final_loss < 0.1);
}

TEST_CASE("pretrain rejects an empty dataset") {
    Dataset d;
    d.kind = TaskKind::visual;
    d.classes = 2;
    d.image_shape = {1, 8, 8};
    OptimizerConfig opt;
    CHECK_THROWS_AS(pretrain(d, nullptr, AeConfig{}, opt), ValueError);
}

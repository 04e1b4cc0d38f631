#include <doctest.h>

#include <cmath>

#include "somnus/ops.hpp"
#include "somnus/rng.hpp"
#include "support/oracles.hpp"

using namespace somnus;

TEST_CASE("conv2d: 1x1 unit kernel is the identity map") {
    Rng rng(0);
    Tensor x = oracle::random_tensor({1, 1, 4, 4}, rng);
    Tensor w = Tensor::full({1, 1, 1, 1}, 1.0);
    Tensor b = Tensor::zeros({1});
    CHECK(conv2d(x, w, b, 1, 0).data() == x.data());
}

TEST_CASE("conv2d: zero input produces a constant bias plane") {
    Tensor x = Tensor::zeros({1, 2, 5, 5});
    Tensor w = Tensor::full({3, 2, 3, 3}, 0.25);
    Tensor b = Tensor::from({3}, {1.5, -2.0, 0.75});
    Tensor y = conv2d(x, w, b, 1, 1);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < 25; ++i) {
            CHECK(y.data()[c * 25 + i] == b.data()[c]);
        }
    }
}

TEST_CASE("conv2d matches the six-loop reference on random tensors") {
    Rng rng(17);
    for (int stride = 1; stride <= 2; ++stride) {
        for (int pad = 0; pad <= 1; ++pad) {
            Tensor x = oracle::random_tensor({1, 1, 5, 5}, rng);
            Tensor w = oracle::random_tensor({2, 1, 3, 3}, rng);
            Tensor b = oracle::random_tensor({2}, rng);
            std::size_t ho = 0, wo = 0;
            auto ref = oracle::conv2d(x.data(), 1, 1, 5, 5, w.data(), 2, 3, b.data(),
                                      stride, pad, ho, wo);
            Tensor y = conv2d(x, w, b, stride, pad);
            REQUIRE(y.shape() == Shape{1, 2, ho, wo});
            for (std::size_t i = 0; i < ref.size(); ++i) {
                CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("conv2d geometry errors") {
    Tensor x = Tensor::zeros({1, 1, 5, 5});
    Tensor b1 = Tensor::zeros({1});
    // (5 + 0 - 2) % 2 != 0 -> non-integer output size.
    CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 1, 2, 2}), b1, 2, 0), ShapeError);
    // channel mismatch
    CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 3, 3, 3}), b1, 1, 1), ShapeError);
    // kernel larger than padded input
    CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 1, 7, 7}), b1, 1, 0), ShapeError);
}

TEST_CASE("deconv2d: stride-2 unit kernel expands one pixel into a block") {
    const double v = 3.25;
    Tensor x = Tensor::full({1, 1, 1, 1}, v);
    Tensor w = Tensor::full({1, 1, 2, 2}, 1.0);
    Tensor b = Tensor::zeros({1});
    Tensor y = deconv2d(x, w, b, 2, 0);
    REQUIRE(y.shape() == Shape{1, 1, 2, 2});
    for (double out : y.data()) CHECK(out == v);
}

TEST_CASE("deconv2d: zero input produces bias-only output") {
    Tensor x = Tensor::zeros({1, 2, 3, 3});
    Tensor w = Tensor::full({2, 1, 4, 4}, 0.5);
    Tensor b = Tensor::from({1}, {-0.75});
    Tensor y = deconv2d(x, w, b, 2, 1);
    REQUIRE(y.shape() == Shape{1, 1, 6, 6});
    for (double out : y.data()) CHECK(out == -0.75);
}

TEST_CASE("deconv2d matches the reference gather implementation") {
    Rng rng(23);
    for (int stride = 1; stride <= 2; ++stride) {
        for (int pad = 0; pad <= 1; ++pad) {
            Tensor x = oracle::random_tensor({2, 2, 3, 3}, rng);
            Tensor w = oracle::random_tensor({2, 3, 3, 3}, rng);
            Tensor b = oracle::random_tensor({3}, rng);
            std::size_t ho = 0, wo = 0;
            auto ref = oracle::deconv2d(x.data(), 2, 2, 3, 3, w.data(), 3, 3, b.data(),
                                        stride, pad, ho, wo);
            Tensor y = deconv2d(x, w, b, stride, pad);
            REQUIRE(y.shape() == Shape{2, 3, ho, wo});
            for (std::size_t i = 0; i < ref.size(); ++i) {
                CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("deconv2d is the adjoint of conv2d for a shared weight buffer") {
    // <conv(x), y> == <x, deconv(y)> when the conv weight (O,I,K,K) is handed
    // to deconv2d, whose input channels are O.
    Rng rng(29);
    for (int stride = 1; stride <= 2; ++stride) {
        const int pad = 1;
        Tensor x = oracle::random_tensor({1, 2, 5, 5}, rng);
        Tensor w = oracle::random_tensor({3, 2, 3, 3}, rng);
        Tensor zb_out = Tensor::zeros({3});
        Tensor zb_in = Tensor::zeros({2});
        Tensor cx = conv2d(x, w, zb_out, stride, pad);
        Tensor y = oracle::random_tensor(cx.shape(), rng);
        Tensor dy = deconv2d(y, w, zb_in, stride, pad);
        REQUIRE(dy.shape() == x.shape());

        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx.data()[i] * y.data()[i];
        for (std::size_t i = 0; i < x.numel(); ++i) rhs += x.data()[i] * dy.data()[i];
        CHECK(std::abs(lhs - rhs) <= 1e-10);
    }
}

TEST_CASE("deconv2d geometry errors") {
    Tensor b = Tensor::zeros({1});
    // (1-1)*1 - 2*2 + 3 < 1 -> degenerate output
    CHECK_THROWS_AS(
        deconv2d(Tensor::zeros({1, 1, 1, 1}), Tensor::zeros({1, 1, 3, 3}), b, 1, 2),
        ShapeError);
    CHECK_THROWS_AS(
        deconv2d(Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({1, 1, 3, 3}), b, 1, 0),
        ShapeError);
}

#include <doctest.h>

#include <cmath>

#include "somnus/gradcheck.hpp"
#include "somnus/ops.hpp"
#include "somnus/rng.hpp"
#include "support/oracles.hpp"

using namespace somnus;

namespace {

// Random values bounded away from zero, for ops with a kink at the origin.
Tensor nudged_tensor(Shape shape, Rng& rng) {
    std::vector<double> v(numel(shape));
    for (double& x : v) {
        const double mag = rng.uniform(0.2, 1.0);
        x = rng.uniform() < 0.5 ? -mag : mag;
    }
    return Tensor(std::move(shape), std::move(v));
}

// An op whose backward is wrong by 1%, for detector sanity.
Tensor square_with_corrupted_grad(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * x.data()[i];
    auto node = std::make_shared<detail::Node>();
    node->op = "square_corrupted";
    node->inputs = {x.impl()};
    node->backward = [](const detail::TensorImpl& o) {
        const auto& xv = o.node->inputs[0]->values;
        std::vector<double> g(o.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] = o.grad[i] * 2.0 * xv[i] * 1.01;
        }
        detail::accumulate_grad(o.node->inputs[0], g.data(), g.size());
    };
    return Tensor::make_result(x.shape(), std::move(out), std::move(node));
}

}  // namespace

TEST_CASE("gradcheck: sum of squares is exact to 1e-8") {
    Rng rng(1);
    Tensor x = nudged_tensor({3, 4}, rng);
    auto report = gradcheck([](const std::vector<Tensor>& in) {
        return sum_all(mul(in[0], in[0]));
    }, {x});
    CHECK(report.passed);
    CHECK(report.max_rel_err < 1e-8);
}

TEST_CASE("gradcheck flags a corrupted gradient") {
    Rng rng(2);
    Tensor x = nudged_tensor({4}, rng);
    auto report = gradcheck([](const std::vector<Tensor>& in) {
        return sum_all(square_with_corrupted_grad(in[0]));
    }, {x});
    CHECK_FALSE(report.passed);
    CHECK(report.max_rel_err > 1e-3);
}

TEST_CASE("gradcheck: every registered op, seeds 0-9, rel tol 1e-4") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        // Fixed random weighting makes reduction gradients non-trivial.
        Tensor wsum = oracle::random_tensor({3, 4}, rng, 0.5, 1.5);
        auto weighted = [&wsum](const Tensor& t) {
            return sum_all(mul(reshape(t, wsum.shape()), wsum));
        };

        {
            Tensor a = oracle::random_tensor({3, 4}, rng);
            Tensor b = oracle::random_tensor({3, 4}, rng);
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                return weighted(add(in[0], in[1]));
            }, {a, b});
            CHECK(r.passed);
            r = gradcheck([&](const std::vector<Tensor>& in) {
                return weighted(sub(in[0], in[1]));
            }, {a, b});
            CHECK(r.passed);
            r = gradcheck([&](const std::vector<Tensor>& in) {
                return weighted(mul(in[0], in[1]));
            }, {a, b});
            CHECK(r.passed);
            r = gradcheck([&](const std::vector<Tensor>& in) {
                return weighted(scale(in[0], -1.375));
            }, {a});
            CHECK(r.passed);
        }
        {
            Tensor a = oracle::random_tensor({3, 5}, rng);
            Tensor b = oracle::random_tensor({5, 4}, rng);
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                return weighted(matmul(in[0], in[1]));
            }, {a, b});
            CHECK(r.passed);
        }
        {
            Tensor x = oracle::random_tensor({3, 4}, rng);
            Tensor b = oracle::random_tensor({4}, rng);
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                return weighted(add_bias_rows(in[0], in[1]));
            }, {x, b});
            CHECK(r.passed);
        }
        {
            Tensor x = nudged_tensor({3, 4}, rng);
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                return weighted(relu(in[0]));
            }, {x});
            CHECK(r.passed);
            r = gradcheck([&](const std::vector<Tensor>& in) {
                return weighted(sigmoid(in[0]));
            }, {x});
            CHECK(r.passed);
            r = gradcheck([&](const std::vector<Tensor>& in) {
                return weighted(somnus::tanh(in[0]));
            }, {x});
            CHECK(r.passed);
        }
        {
            Tensor x = oracle::random_tensor({1, 3, 2, 2}, rng);
            Tensor w = oracle::random_tensor({4, 3, 3, 3}, rng);
            Tensor b = oracle::random_tensor({4}, rng);
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                return sum_all(mul(conv2d(in[0], in[1], in[2], 1, 1),
                                   Tensor::full({1, 4, 2, 2}, 0.75)));
            }, {x, w, b});
            CHECK(r.passed);
        }
        {
            Tensor x = oracle::random_tensor({1, 2, 3, 3}, rng);
            Tensor w = oracle::random_tensor({2, 3, 2, 2}, rng);
            Tensor b = oracle::random_tensor({3}, rng);
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                return sum_all(mul(deconv2d(in[0], in[1], in[2], 2, 0),
                                   Tensor::full({1, 3, 6, 6}, 0.6)));
            }, {x, w, b});
            CHECK(r.passed);
        }
        {
            Tensor x = oracle::random_tensor({3, 4}, rng);
            Tensor gain = oracle::random_tensor({4}, rng, 0.5, 1.5);
            Tensor bias = oracle::random_tensor({4}, rng);
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                return weighted(layer_norm(in[0], in[1], in[2], 1e-5, 1));
            }, {x, gain, bias});
            CHECK(r.passed);
        }
        {
            Tensor x = oracle::random_tensor({3, 4}, rng, -2.0, 2.0);
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                return weighted(softmax(in[0], 1));
            }, {x});
            CHECK(r.passed);
        }
        {
            Tensor x = oracle::random_tensor({2, 2, 3, 3}, rng);
            Tensor gain = oracle::random_tensor({2}, rng, 0.5, 1.5);
            Tensor bias = oracle::random_tensor({2}, rng);
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                return sum_all(mul(layer_norm2d(in[0], in[1], in[2], 1e-5),
                                   Tensor::full({2, 2, 3, 3}, 0.45)));
            }, {x, gain, bias});
            CHECK(r.passed);
        }
        {
            Tensor table = oracle::random_tensor({5, 3}, rng);
            IntTensor ids = IntTensor::from({4}, {0, 2, 4, 2});
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                return sum_all(mul(embedding_lookup(in[0], ids),
                                   Tensor::full({4, 3}, 0.8)));
            }, {table});
            CHECK(r.passed);
        }
        {
            Tensor logits = oracle::random_tensor({4, 3}, rng, -2.0, 2.0);
            IntTensor labels = IntTensor::from({4}, {0, 2, 1, 1});
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                return cross_entropy(in[0], labels);
            }, {logits}, 1e-5);
            CHECK(r.passed);
        }
        {
            Tensor a = oracle::random_tensor({2, 3}, rng);
            Tensor b = oracle::random_tensor({2, 3}, rng);
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                return mse(in[0], in[1]);
            }, {a, b}, 1e-5);
            CHECK(r.passed);
        }
        {
            Tensor x = oracle::random_tensor({2, 3, 4, 4}, rng);
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                return sum_all(mul(global_avg_pool2d(in[0]), Tensor::full({2, 3}, 1.25)));
            }, {x});
            CHECK(r.passed);
        }
        {
            Tensor x = oracle::random_tensor({2, 4, 3}, rng);
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                return sum_all(mul(mean_over_time(in[0]), Tensor::full({2, 3}, 0.5)));
            }, {x});
            CHECK(r.passed);
        }
        {
            Tensor x = oracle::random_tensor({2, 6}, rng);
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                Tensor left = slice_cols(in[0], 0, 2);
                Tensor right = slice_cols(in[0], 2, 6);
                return sum_all(mul(concat_cols(right, left), Tensor::full({2, 6}, 0.9)));
            }, {x});
            CHECK(r.passed);
        }
        {
            Tensor x = oracle::random_tensor({2, 3, 4}, rng);
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                std::vector<Tensor> steps;
                for (std::size_t t = 0; t < 3; ++t) steps.push_back(slice_time(in[0], t));
                return sum_all(mul(stack_time(steps), Tensor::full({2, 3, 4}, 1.1)));
            }, {x});
            CHECK(r.passed);
        }
        {
            const std::size_t xdim = 3, hdim = 2;
            Tensor w_x = oracle::random_tensor({xdim, 4 * hdim}, rng);
            Tensor w_h = oracle::random_tensor({hdim, 4 * hdim}, rng);
            Tensor b = oracle::random_tensor({4 * hdim}, rng);
            Tensor x = oracle::random_tensor({2, xdim}, rng);
            Tensor h0 = oracle::random_tensor({2, hdim}, rng);
            Tensor c0 = oracle::random_tensor({2, hdim}, rng);
            auto r = gradcheck([&](const std::vector<Tensor>& in) {
                auto [h, c] = lstm_cell(in[0], in[1], in[2], {in[3], in[4], in[5]});
                return add(sum_all(mul(h, Tensor::full({2, hdim}, 0.7))), sum_all(c));
            }, {x, h0, c0, w_x, w_h, b});
            CHECK(r.passed);
        }
    }
}

TEST_CASE("gradcheck: composed conv -> norm -> relu -> dense graph") {
    Rng rng(40);
    Tensor x = oracle::random_tensor({1, 2, 4, 4}, rng);
    Tensor cw = oracle::random_tensor({3, 2, 3, 3}, rng);
    Tensor cb = oracle::random_tensor({3}, rng, 0.1, 0.5);
    Tensor gain = oracle::random_tensor({3}, rng, 0.8, 1.2);
    Tensor nb = oracle::random_tensor({3}, rng, 0.3, 0.9);
    Tensor dw = oracle::random_tensor({3, 2}, rng);
    Tensor db = oracle::random_tensor({2}, rng);
    IntTensor labels = IntTensor::from({1}, {1});

    auto f = [&labels](const std::vector<Tensor>& in) {
        Tensor h = conv2d(in[0], in[1], in[2], 1, 1);
        h = layer_norm(h, in[3], in[4], 1e-5, 1);
        h = relu(h);
        Tensor pooled = global_avg_pool2d(h);
        Tensor logits = add_bias_rows(matmul(pooled, in[5]), in[6]);
        return cross_entropy(logits, labels);
    };

    // Sample until the forward pass is comfortably away from relu kinks.
    for (std::uint64_t sub = 0;; ++sub) {
        debug::reset_kink_monitors();
        f({x, cw, cb, gain, nb, dw, db});
        if (debug::min_abs_relu_input() > 1e-3) break;
        REQUIRE(sub < 50);
        Rng retry(100 + sub);
        x = oracle::random_tensor({1, 2, 4, 4}, retry);
    }

    auto report = gradcheck(f, {x, cw, cb, gain, nb, dw, db});
    CHECK(report.passed);
    CHECK(report.max_rel_err < 1e-4);
}

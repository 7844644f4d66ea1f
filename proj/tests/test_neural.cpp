#include <doctest.h>

#include "ilrec/neural.hpp"

using namespace ilrec;
using namespace ilrec::neural;

namespace {

Vec random_vec(std::size_t n, Rng& rng, double scale = 1.0) {
    Vec v(n);
    for (double& x : v) x = scale * gauss(rng);
    return v;
}

// squared loss against a fixed target, with its output gradient
LossFn squared_loss(Vec target) {
    return [target](const Vec& out) {
        double loss = 0.0;
        Vec grad(out.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            double d = out[i] - target[i];
            loss += d * d;
            grad[i] = 2.0 * d;
        }
        return std::make_pair(loss, grad);
    };
}

}  // namespace

TEST_CASE("forward basics") {
    SUBCASE("zero net, identity activation gives zero output") {
        Net net = make_zero_net({3, 4, 2}, Activation::kIdentity, OutputHead::kLinear);
        Vec out = forward(net, {1.0, -2.0, 3.0});
        for (double x : out) CHECK(x == 0.0);
    }
    SUBCASE("softmax over equal logits is uniform") {
        Net net = make_zero_net({2, 3}, Activation::kIdentity, OutputHead::kSoftmax);
        Vec out = forward(net, {0.5, -0.5});
        for (double x : out) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("identity single layer W=I b=0 reproduces input") {
        Net net = make_zero_net({3, 3}, Activation::kIdentity, OutputHead::kLinear);
        for (int i = 0; i < 3; ++i) net.weights[0][i * 3 + i] = 1.0;
        Vec in{0.3, -1.2, 2.5};
        Vec out = forward(net, in);
        for (int i = 0; i < 3; ++i) CHECK(out[i] == doctest::Approx(in[i]));
    }
    SUBCASE("dim mismatch is a usage error") {
        Net net = make_zero_net({3, 2}, Activation::kTanh, OutputHead::kLinear);
        CHECK_THROWS_AS(forward(net, {1.0, 2.0}), UsageError);
    }
    SUBCASE("softmax is stable for logits up to 1e3") {
        Net net = make_zero_net({2, 3}, Activation::kIdentity, OutputHead::kLinear);
        Vec p = softmax({1000.0, -1000.0, 999.0});
        CHECK(all_finite(p));
        double s = 0.0;
        for (double x : p) {
            CHECK(x >= 0.0);  // exp(-2000) may underflow to exactly 0
            s += x;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(p[0] > 0.5);  // the max logit dominates
    }
}

TEST_CASE("backward basics") {
    Rng rng(7);
    SUBCASE("zero upstream grad gives zero parameter gradients") {
        Net net = make_net({3, 5, 2}, Activation::kTanh, OutputHead::kLinear, 1);
        auto cache = forward_cached(net, random_vec(3, rng));
        Gradients g = backward(net, cache, {0.0, 0.0});
        for (const auto& w : g.weights)
            for (double x : w) CHECK(x == 0.0);
        for (const auto& b : g.biases)
            for (double x : b) CHECK(x == 0.0);
    }
    SUBCASE("last-layer bias gradient equals the upstream scalar") {
        Net net = make_net({3, 5, 1}, Activation::kTanh, OutputHead::kLinear, 2);
        auto cache = forward_cached(net, random_vec(3, rng));
        Gradients g = backward(net, cache, {2.5});
        CHECK(g.biases.back()[0] == doctest::Approx(2.5));
    }
    SUBCASE("non-finite upstream grad is a numeric error") {
        Net net = make_net({2, 2}, Activation::kTanh, OutputHead::kLinear, 3);
        auto cache = forward_cached(net, {0.1, 0.2});
        CHECK_THROWS_AS(backward(net, cache, {std::nan(""), 0.0}), NumericError);
    }
}

TEST_CASE("gradient check against central finite differences") {
    Rng rng(11);
    SUBCASE("linear net + squared loss is exact up to float noise") {
        Net net = make_net({4, 3}, Activation::kIdentity, OutputHead::kLinear, 5);
        double err = gradient_check(net, squared_loss(random_vec(3, rng)),
                                    random_vec(4, rng), 1e-5);
        CHECK(err < 1e-7);
    }
    SUBCASE("tanh 2-layer nets on random points") {
        for (int trial = 0; trial < 10; ++trial) {
            Net net = make_net({5, 8, 3}, Activation::kTanh, OutputHead::kLinear,
                               100 + trial);
            double err = gradient_check(net, squared_loss(random_vec(3, rng)),
                                        random_vec(5, rng), 1e-5);
            CHECK(err < 1e-4);
        }
    }
    SUBCASE("relu nets away from kinks") {
        for (int trial = 0; trial < 10; ++trial) {
            Net net = make_net({5, 8, 3}, Activation::kRelu, OutputHead::kLinear,
                               200 + trial);
            // resample inputs until all pre-activations are away from zero
            Vec input;
            bool ok = false;
            for (int tries = 0; tries < 200 && !ok; ++tries) {
                input = random_vec(5, rng);
                auto cache = forward_cached(net, input);
                ok = true;
                for (const Vec& pre : cache.pre)
                    for (double x : pre)
                        if (std::fabs(x) < 1e-3) ok = false;
            }
            REQUIRE(ok);
            double err = gradient_check(net, squared_loss(random_vec(3, rng)), input,
                                        1e-5);
            CHECK(err < 1e-4);
        }
    }
    SUBCASE("softmax head with log-loss") {
        Net net = make_net({4, 6, 3}, Activation::kTanh, OutputHead::kSoftmax, 9);
        LossFn nll = [](const Vec& p) {
            Vec g(p.size(), 0.0);
            g[1] = -1.0 / p[1];
            return std::make_pair(-std::log(p[1]), g);
        };
        CHECK(gradient_check(net, nll, random_vec(4, rng), 1e-5) < 1e-4);
    }
}

TEST_CASE("adam") {
    SUBCASE("zero grads leave parameters unchanged") {
        Net net = make_net({2, 3}, Activation::kTanh, OutputHead::kLinear, 1);
        Net before = net;
        OptState opt = make_opt_state(net, 1e-3);
        adam_step(net, make_zero_grads(net), opt);
        CHECK(net.weights[0] == before.weights[0]);
        CHECK(net.biases[0] == before.biases[0]);
        CHECK(opt.step == 1);
    }
    SUBCASE("first step magnitude is ~lr*sign(g) per coordinate") {
        Net net = make_net({2, 2}, Activation::kTanh, OutputHead::kLinear, 2);
        Net before = net;
        OptState opt = make_opt_state(net, 1e-3);
        Gradients g = make_zero_grads(net);
        g.weights[0] = {0.5, -2.0, 1e-3, -7.0};
        adam_step(net, g, opt);
        for (int i = 0; i < 4; ++i) {
            double delta = net.weights[0][i] - before.weights[0][i];
            CHECK(std::fabs(delta) == doctest::Approx(1e-3).epsilon(1e-3));
            CHECK(delta * g.weights[0][i] < 0.0);  // descent direction
        }
    }
    SUBCASE("descent on f(x)=||x||^2 from (1,1)") {
        // one 'net' whose two biases act as the optimization variable
        Net net = make_zero_net({1, 2}, Activation::kIdentity, OutputHead::kLinear);
        net.biases[0] = {1.0, 1.0};
        OptState opt = make_opt_state(net, 0.05);
        for (int i = 0; i < 50; ++i) {
            Gradients g = make_zero_grads(net);
            g.biases[0] = {2.0 * net.biases[0][0], 2.0 * net.biases[0][1]};
            adam_step(net, g, opt);
        }
        CHECK(norm2(net.biases[0]) < 0.1);
    }
}

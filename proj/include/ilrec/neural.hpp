#pragma once

// Minimal feedforward substrate with hand-written backprop, Adam, and a
// finite-difference gradient checker. Shared by the world model, the
// discriminator, the policy and all critic networks.

#include <cmath>
#include <functional>
#include <utility>

#include "ilrec/common.hpp"

namespace ilrec::neural {

enum class Activation { kTanh, kRelu, kIdentity };
enum class OutputHead { kLinear, kSoftmax };

struct Net {
    std::vector<int> layer_dims;  // [in, hidden..., out]
    Activation activation = Activation::kTanh;
    OutputHead head = OutputHead::kLinear;
    // weights[l] is row-major (layer_dims[l+1] x layer_dims[l]).
    std::vector<Vec> weights;
    std::vector<Vec> biases;

    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }
    std::size_t num_layers() const { return weights.size(); }
};

// Scaled uniform fan-in init, bound = 1/sqrt(fan_in).
inline Net make_net(std::vector<int> dims, Activation act, OutputHead head,
                    std::uint64_t seed) {
    if (dims.size() < 2) throw ConfigError("make_net: need at least 2 layer dims");
    for (int d : dims)
        if (d <= 0) throw ConfigError("make_net: non-positive layer dim");
    Net net;
    net.layer_dims = std::move(dims);
    net.activation = act;
    net.head = head;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
        int in = net.layer_dims[l], out = net.layer_dims[l + 1];
        double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> u(-bound, bound);
        Vec w(static_cast<std::size_t>(in) * out);
        for (double& x : w) x = u(rng);
        net.weights.push_back(std::move(w));
        net.biases.push_back(Vec(out, 0.0));
    }
    return net;
}

inline Net make_zero_net(std::vector<int> dims, Activation act, OutputHead head) {
    Net net = make_net(std::move(dims), act, head, 0);
    for (auto& w : net.weights) std::fill(w.begin(), w.end(), 0.0);
    return net;
}

// Max-subtracted softmax; safe for logits up to ~1e3 magnitude.
inline Vec softmax(const Vec& logits) {
    double m = *std::max_element(logits.begin(), logits.end());
    Vec p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (double& x : p) x /= z;
    return p;
}

struct ForwardCache {
    Vec input;
    std::vector<Vec> pre;   // per layer pre-activation
    std::vector<Vec> post;  // per layer post-activation (last layer: pre-head)
    Vec output;             // after head
};

inline double apply_act(Activation a, double x) {
    switch (a) {
        case Activation::kTanh: return std::tanh(x);
        case Activation::kRelu: return x > 0.0 ? x : 0.0;
        default: return x;
    }
}

inline double act_grad(Activation a, double pre, double post) {
    switch (a) {
        case Activation::kTanh: return 1.0 - post * post;
        case Activation::kRelu: return pre > 0.0 ? 1.0 : 0.0;
        default: return 1.0;
    }
}

inline ForwardCache forward_cached(const Net& net, const Vec& input) {
    if (static_cast<int>(input.size()) != net.input_dim())
        throw UsageError("forward: input dim mismatch");
    ForwardCache cache;
    cache.input = input;
    const Vec* x = &cache.input;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        int in = net.layer_dims[l], out = net.layer_dims[l + 1];
        Vec pre(out);
        const double* w = net.weights[l].data();
        for (int o = 0; o < out; ++o) {
            double s = net.biases[l][o];
            const double* row = w + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) s += row[i] * (*x)[i];
            pre[o] = s;
        }
        bool last = (l + 1 == net.num_layers());
        Vec post(out);
        for (int o = 0; o < out; ++o)
            post[o] = last ? pre[o] : apply_act(net.activation, pre[o]);
        cache.pre.push_back(std::move(pre));
        cache.post.push_back(std::move(post));
        x = &cache.post.back();
    }
    cache.output = net.head == OutputHead::kSoftmax ? softmax(cache.post.back())
                                                    : cache.post.back();
    return cache;
}

inline Vec forward(const Net& net, const Vec& input) {
    return forward_cached(net, input).output;
}

struct Gradients {
    std::vector<Vec> weights;
    std::vector<Vec> biases;
};

inline Gradients make_zero_grads(const Net& net) {
    Gradients g;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        g.weights.push_back(Vec(net.weights[l].size(), 0.0));
        g.biases.push_back(Vec(net.biases[l].size(), 0.0));
    }
    return g;
}

inline void accumulate(Gradients& into, const Gradients& g, double scale = 1.0) {
    for (std::size_t l = 0; l < into.weights.size(); ++l) {
        for (std::size_t i = 0; i < into.weights[l].size(); ++i)
            into.weights[l][i] += scale * g.weights[l][i];
        for (std::size_t i = 0; i < into.biases[l].size(); ++i)
            into.biases[l][i] += scale * g.biases[l][i];
    }
}

inline void scale(Gradients& g, double s) {
    for (auto& w : g.weights)
        for (double& x : w) x *= s;
    for (auto& b : g.biases)
        for (double& x : b) x *= s;
}

// Backprop of upstream_grad (w.r.t. the head output) into parameter space.
// Gradients are accumulated into `into` so batch losses can sum in place.
inline void backward_into(const Net& net, const ForwardCache& cache,
                          const Vec& upstream_grad, Gradients& into) {
    if (!all_finite(upstream_grad))
        throw NumericError("backward: non-finite upstream gradient");
    if (upstream_grad.size() != cache.output.size())
        throw UsageError("backward: upstream grad dim mismatch");

    Vec delta;  // gradient w.r.t. current layer pre-activation
    if (net.head == OutputHead::kSoftmax) {
        // d logits = p .* (g - <p, g>)
        const Vec& p = cache.output;
        double pg = dot(p, upstream_grad);
        delta.resize(p.size());
        for (std::size_t i = 0; i < p.size(); ++i)
            delta[i] = p[i] * (upstream_grad[i] - pg);
    } else {
        delta = upstream_grad;
    }

    for (std::size_t l = net.num_layers(); l-- > 0;) {
        int in = net.layer_dims[l], out = net.layer_dims[l + 1];
        const Vec& x = (l == 0) ? cache.input : cache.post[l - 1];
        double* gw = into.weights[l].data();
        for (int o = 0; o < out; ++o) {
            into.biases[l][o] += delta[o];
            double* row = gw + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) row[i] += delta[o] * x[i];
        }
        if (l == 0) break;
        Vec prev(in, 0.0);
        const double* w = net.weights[l].data();
        for (int o = 0; o < out; ++o) {
            const double* row = w + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) prev[i] += row[i] * delta[o];
        }
        for (int i = 0; i < in; ++i)
            prev[i] *= act_grad(net.activation, cache.pre[l - 1][i], cache.post[l - 1][i]);
        delta = std::move(prev);
    }
}

inline Gradients backward(const Net& net, const ForwardCache& cache,
                          const Vec& upstream_grad) {
    Gradients g = make_zero_grads(net);
    backward_into(net, cache, upstream_grad, g);
    return g;
}

struct OptState {
    std::vector<Vec> m;
    std::vector<Vec> v;
    long step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

inline OptState make_opt_state(const Net& net, double learning_rate = 1e-3) {
    OptState opt;
    opt.learning_rate = learning_rate;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        opt.m.push_back(Vec(net.weights[l].size() + net.biases[l].size(), 0.0));
        opt.v.push_back(Vec(net.weights[l].size() + net.biases[l].size(), 0.0));
    }
    return opt;
}

// Bias-corrected Adam update, in place.
inline void adam_step(Net& net, const Gradients& grads, OptState& opt) {
    opt.step += 1;
    double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        std::size_t nw = net.weights[l].size();
        auto update = [&](double& param, double g, std::size_t slot) {
            double& m = opt.m[l][slot];
            double& v = opt.v[l][slot];
            m = opt.beta1 * m + (1.0 - opt.beta1) * g;
            v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
            double mhat = m / bc1, vhat = v / bc2;
            param -= opt.learning_rate * mhat / (std::sqrt(vhat) + opt.epsilon);
            if (!std::isfinite(param))
                throw NumericError("adam_step: parameter became non-finite");
        };
        for (std::size_t i = 0; i < nw; ++i)
            update(net.weights[l][i], grads.weights[l][i], i);
        for (std::size_t i = 0; i < net.biases[l].size(); ++i)
            update(net.biases[l][i], grads.biases[l][i], nw + i);
    }
}

// loss_fn maps a network output to (loss, dloss/doutput).
using LossFn = std::function<std::pair<double, Vec>(const Vec&)>;

inline double rel_error(double a, double b) {
    return std::fabs(a - b) / std::max(1e-8, std::fabs(a) + std::fabs(b));
}

// Central finite differences over every parameter; returns the max relative
// error against the analytic gradient.
inline double gradient_check(Net net, const LossFn& loss_fn, const Vec& input,
                             double eps = 1e-5) {
    ForwardCache cache = forward_cached(net, input);
    auto [loss, up] = loss_fn(cache.output);
    (void)loss;
    Gradients analytic = backward(net, cache, up);

    double max_err = 0.0;
    auto probe = [&](double& param, double analytic_g) {
        double saved = param;
        param = saved + eps;
        double lp = loss_fn(forward(net, input)).first;
        param = saved - eps;
        double lm = loss_fn(forward(net, input)).first;
        param = saved;
        double numeric = (lp - lm) / (2.0 * eps);
        max_err = std::max(max_err, rel_error(analytic_g, numeric));
    };
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        for (std::size_t i = 0; i < net.weights[l].size(); ++i)
            probe(net.weights[l][i], analytic.weights[l][i]);
        for (std::size_t i = 0; i < net.biases[l].size(); ++i)
            probe(net.biases[l][i], analytic.biases[l][i]);
    }
    return max_err;
}

}  // namespace ilrec::neural

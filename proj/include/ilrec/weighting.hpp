#pragma once

// Demonstration-quality weighting: discounted returns, the demonstration
// value network, advantages under the world model, the environment and IRL
// weights, geometric fusion, and mean normalization with clipping.

#include "ilrec/common.hpp"
#include "ilrec/env.hpp"
#include "ilrec/expert.hpp"
#include "ilrec/irl.hpp"
#include "ilrec/neural.hpp"

namespace ilrec::weighting {

struct WeightConfig {
    double beta = 1.0;        // temperature of the environment weight
    double gamma_irl = 1.0;   // discriminator confidence exponent
    double alpha = 0.5;       // fusion trade-off, in [0,1]
    double gamma_discount = 0.95;
    double clip_low = 0.1;
    double clip_high = 10.0;

    void validate() const {
        if (beta <= 0.0) throw ConfigError("weighting.beta must be > 0");
        if (gamma_irl < 0.0) throw ConfigError("weighting.gamma_irl must be >= 0");
        if (alpha < 0.0 || alpha > 1.0)
            throw ConfigError("weighting.alpha must be in [0,1]");
        if (gamma_discount < 0.0 || gamma_discount >= 1.0)
            throw ConfigError("weighting.gamma_discount must be in [0,1)");
        if (clip_low <= 0.0 || clip_high <= clip_low)
            throw ConfigError("weighting.clip range must satisfy 0 < low < high");
    }
};

// G_t = sum_{k>=t} gamma^(k-t) r_k, computed backward.
inline Vec returns(const env::Trajectory& trajectory, double gamma_discount) {
    if (trajectory.transitions.empty()) throw UsageError("returns: empty trajectory");
    Vec g(trajectory.transitions.size());
    double acc = 0.0;
    for (std::size_t i = trajectory.transitions.size(); i-- > 0;) {
        acc = trajectory.transitions[i].reward + gamma_discount * acc;
        g[i] = acc;
    }
    return g;
}

struct ValueDemoConfig {
    std::vector<int> hidden = {64, 64};
    double learning_rate = 1e-3;
    int epochs = 40;
    int batch_size = 64;
    std::uint64_t seed = 0;
};

struct ValueDemo {
    neural::Net net;  // state encoding -> predicted return
    double final_mse = 0.0;

    double value(const Vec& state_encoding) const {
        return neural::forward(net, state_encoding)[0];
    }
};

// Regression of state encodings onto empirically observed returns.
inline ValueDemo fit_value_demo(const expert::DemoSet& demo_set,
                                double gamma_discount, const ValueDemoConfig& config) {
    if (demo_set.trajectories.empty())
        throw UsageError("fit_value_demo: empty demo set");
    std::vector<const Vec*> xs;
    Vec ys;
    for (const auto& traj : demo_set.trajectories) {
        Vec g = returns(traj, gamma_discount);
        for (std::size_t t = 0; t < traj.transitions.size(); ++t) {
            xs.push_back(&traj.transitions[t].state.encoding);
            ys.push_back(g[t]);
        }
    }

    ValueDemo vd;
    std::vector<int> dims;
    dims.push_back(static_cast<int>(xs[0]->size()));
    for (int h : config.hidden) dims.push_back(h);
    dims.push_back(1);
    vd.net = neural::make_net(dims, neural::Activation::kTanh,
                              neural::OutputHead::kLinear,
                              derive_seed(config.seed, "v_demo"));
    neural::OptState opt = neural::make_opt_state(vd.net, config.learning_rate);

    Rng shuffle_rng(derive_seed(config.seed, "v_demo_shuffle"));
    std::vector<std::size_t> order(xs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t at = 0; at < order.size(); at += config.batch_size) {
            std::size_t end = std::min(order.size(), at + config.batch_size);
            neural::Gradients grads = neural::make_zero_grads(vd.net);
            for (std::size_t j = at; j < end; ++j) {
                auto cache = neural::forward_cached(vd.net, *xs[order[j]]);
                double err = cache.output[0] - ys[order[j]];
                neural::backward_into(vd.net, cache,
                                      {2.0 * err / static_cast<double>(end - at)}, grads);
            }
            neural::adam_step(vd.net, grads, opt);
        }
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double err = neural::forward(vd.net, *xs[i])[0] - ys[i];
        mse += err * err;
    }
    vd.final_mse = mse / static_cast<double>(xs.size());
    return vd;
}

// A_demo = r_hat(s,a) + gamma*V_demo(s') - V_demo(s); terminal transitions
// drop the bootstrap term.
inline double advantage_demo(double world_model_reward, double value,
                             double next_value, double gamma_discount,
                             bool terminal) {
    if (!std::isfinite(value) || !std::isfinite(next_value))
        throw NumericError("advantage_demo: non-finite value");
    double bootstrap = terminal ? 0.0 : gamma_discount * next_value;
    return world_model_reward + bootstrap - value;
}

// w_env = exp(A / beta)
inline double env_weight(double advantage, double beta) {
    if (beta <= 0.0) throw ConfigError("env_weight: beta must be > 0");
    return std::exp(advantage / beta);
}

// w_IRL = (1/D - 1)^gamma
inline double irl_weight(double disc_prob, double gamma_irl) {
    if (disc_prob <= 0.0 || disc_prob >= 1.0)
        throw UsageError("irl_weight: disc_prob must be in clamped (0,1)");
    return std::pow(1.0 / disc_prob - 1.0, gamma_irl);
}

// w = w_env^alpha * w_irl^(1-alpha)
inline double fuse_weights(double w_env, double w_irl, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("fuse_weights: alpha in [0,1]");
    if (alpha == 1.0) return w_env;
    if (alpha == 0.0) return w_irl;
    return std::pow(w_env, alpha) * std::pow(w_irl, 1.0 - alpha);
}

// Divide by the mean (making the mean 1), then clamp to the clip range.
inline Vec normalize_clip(const Vec& weights, double clip_low, double clip_high) {
    if (weights.empty()) throw UsageError("normalize_clip: empty weights");
    double mean = 0.0;
    for (double w : weights) {
        if (!std::isfinite(w) || w < 0.0)
            throw NumericError("normalize_clip: weights must be finite and >= 0");
        mean += w;
    }
    mean /= static_cast<double>(weights.size());
    if (mean <= 0.0) throw NumericError("normalize_clip: zero mean weight");
    Vec out(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i)
        out[i] = clamp(weights[i] / mean, clip_low, clip_high);
    return out;
}

struct WeightedDemoSet {
    const expert::DemoSet* base = nullptr;
    // flattened per transition, trajectory-major order
    Vec advantage;
    Vec w_env;
    Vec w_irl;
    Vec fused;
    Vec weight;  // normalized and clipped
    std::vector<std::pair<int, int>> index;  // (trajectory, step) per flat slot
};

// Full weighting pass over a demo set: advantages under the world model and
// V_demo, both weights, fusion, then dataset-wide normalization + clipping.
inline WeightedDemoSet compute_weights(const expert::DemoSet& demos,
                                       const env::Catalog& catalog,
                                       const env::WorldModel& world_model,
                                       const ValueDemo& v_demo,
                                       const irl::Discriminator& disc,
                                       const WeightConfig& config) {
    config.validate();
    WeightedDemoSet out;
    out.base = &demos;
    for (std::size_t k = 0; k < demos.trajectories.size(); ++k) {
        const auto& traj = demos.trajectories[k];
        for (std::size_t t = 0; t < traj.transitions.size(); ++t) {
            const env::Transition& tr = traj.transitions[t];
            double rhat = world_model.predict_reward(
                tr.state.encoding, env::item_by_id(catalog, tr.action).embedding);
            double v = v_demo.value(tr.state.encoding);
            double vn = tr.done ? 0.0 : v_demo.value(tr.next_state.encoding);
            double adv = advantage_demo(rhat, v, vn, config.gamma_discount, tr.done);
            double we = env_weight(adv, config.beta);
            double d = irl::discriminator_prob(disc, demos.embeddings[k][t]);
            double wi = irl_weight(d, config.gamma_irl);
            out.advantage.push_back(adv);
            out.w_env.push_back(we);
            out.w_irl.push_back(wi);
            out.fused.push_back(fuse_weights(we, wi, config.alpha));
            out.index.push_back({static_cast<int>(k), static_cast<int>(t)});
        }
    }
    out.weight = normalize_clip(out.fused, config.clip_low, config.clip_high);
    return out;
}

}  // namespace ilrec::weighting

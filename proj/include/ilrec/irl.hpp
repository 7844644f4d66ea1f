#pragma once

// Adversarial discriminator separating policy rollouts from expert
// demonstrations, and the -log D reward it induces.

#include "ilrec/common.hpp"
#include "ilrec/neural.hpp"

namespace ilrec::irl {

constexpr double kProbClamp = 1e-6;

struct Discriminator {
    neural::Net net;  // (state embedding ++ action embedding) -> scalar logit
    double last_loss = 0.0;
    long update_count = 0;
};

struct DiscriminatorConfig {
    std::vector<int> hidden = {64, 64};
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

inline Discriminator make_discriminator(int input_dim, const DiscriminatorConfig& config) {
    Discriminator d;
    std::vector<int> dims;
    dims.push_back(input_dim);
    for (int h : config.hidden) dims.push_back(h);
    dims.push_back(1);
    d.net = neural::make_net(dims, neural::Activation::kTanh,
                             neural::OutputHead::kLinear,
                             derive_seed(config.seed, "discriminator"));
    return d;
}

// Probability that (s,a) originates from the policy rather than the expert.
inline double discriminator_prob(const Discriminator& disc, const Vec& embedding) {
    double p = sigmoid(neural::forward(disc.net, embedding)[0]);
    return clamp(p, kProbClamp, 1.0 - kProbClamp);
}

inline double discriminator_prob(const Discriminator& disc, const Vec& state_embedding,
                                 const Vec& action_embedding) {
    return discriminator_prob(disc, concat(state_embedding, action_embedding));
}

// One optimizer step on L_D = -E_demo[log(1-D)] - E_policy[log D]; expert
// pairs are pushed toward D -> 0, policy pairs toward D -> 1. Returns the
// post-step loss.
inline double train_discriminator(Discriminator& disc,
                                  const std::vector<Vec>& demo_batch,
                                  const std::vector<Vec>& policy_batch,
                                  neural::OptState& opt) {
    if (demo_batch.empty() || policy_batch.empty())
        throw UsageError("train_discriminator: empty batch");

    neural::Gradients grads = neural::make_zero_grads(disc.net);
    auto add = [&](const std::vector<Vec>& batch, bool from_policy) {
        double inv = 1.0 / static_cast<double>(batch.size());
        for (const Vec& x : batch) {
            auto cache = neural::forward_cached(disc.net, x);
            double p = clamp(sigmoid(cache.output[0]), kProbClamp, 1.0 - kProbClamp);
            // d(-log D)/dlogit = -(1-p); d(-log(1-D))/dlogit = p
            double g = from_policy ? -(1.0 - p) : p;
            neural::backward_into(disc.net, cache, {g * inv}, grads);
        }
    };
    add(demo_batch, false);
    add(policy_batch, true);
    neural::adam_step(disc.net, grads, opt);

    double loss = 0.0;
    for (const Vec& x : demo_batch)
        loss -= std::log(1.0 - discriminator_prob(disc, x)) / demo_batch.size();
    for (const Vec& x : policy_batch)
        loss -= std::log(discriminator_prob(disc, x)) / policy_batch.size();
    disc.last_loss = loss;
    disc.update_count += 1;
    return loss;
}

// r_IRL(s,a) = -log D(s,a); expert-like pairs yield higher reward. Bounded
// by the probability clamp.
inline double irl_reward(const Discriminator& disc, const Vec& embedding) {
    return -std::log(discriminator_prob(disc, embedding));
}

inline double irl_reward(const Discriminator& disc, const Vec& state_embedding,
                         const Vec& action_embedding) {
    return -std::log(discriminator_prob(disc, state_embedding, action_embedding));
}

}  // namespace ilrec::irl

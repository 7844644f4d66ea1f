#pragma once

// Policy and critic networks, mixed replay with weight-proportional demo
// priority, the weighted imitation loss, the entropy-regularized actor-critic
// loss, the TD critic loss, and the full three-phase training orchestration.

#include <optional>

#include "ilrec/common.hpp"
#include "ilrec/env.hpp"
#include "ilrec/expert.hpp"
#include "ilrec/irl.hpp"
#include "ilrec/neural.hpp"
#include "ilrec/weighting.hpp"

namespace ilrec::policy {

enum class RewardSource { kWorldModel, kIrl, kMix };

struct TrainConfig {
    double lambda_imit = 0.5;
    double alpha_ent = 0.01;
    double gamma_discount = 0.95;
    double learning_rate = 1e-3;
    std::vector<int> hidden = {64, 64};
    int batch_size = 32;
    int rounds = 200;
    int rollout_episodes_per_round = 10;
    int critic_updates_per_round = 144;
    int policy_updates_per_round = 36;
    int target_sync_interval = 100;
    double mix_ratio = 0.5;
    int env_buffer_capacity = 20000;
    int disc_refresh_every = 10;   // policy-update rounds between refreshes
    int disc_refresh_steps = 50;
    int disc_pretrain_steps = 100;
    RewardSource reward_source = RewardSource::kWorldModel;
    // ablation switches
    bool use_weighting = true;        // false: w == 1 everywhere
    bool disable_irl = false;         // no discriminator at all
    bool weight_imitation = true;     // weights in the imitation loss
    bool weight_replay = true;        // weight-proportional demo priority
    std::uint64_t seed = 0;

    void validate() const {
        if (lambda_imit < 0.0) throw ConfigError("policy.lambda_imit must be >= 0");
        if (alpha_ent < 0.0) throw ConfigError("policy.alpha_ent must be >= 0");
        if (gamma_discount < 0.0 || gamma_discount >= 1.0)
            throw ConfigError("policy.gamma_discount must be in [0,1)");
        if (batch_size <= 0 || rounds < 0 || rollout_episodes_per_round <= 0 ||
            critic_updates_per_round < 0 || policy_updates_per_round < 0 ||
            target_sync_interval <= 0 || env_buffer_capacity <= 0)
            throw ConfigError("policy: counts must be positive");
        if (mix_ratio < 0.0 || mix_ratio > 1.0)
            throw ConfigError("policy.mix_ratio must be in [0,1]");
    }
};

struct PolicyBundle {
    neural::Net actor;     // state -> softmax over items
    neural::Net q;         // state -> Q value per item
    neural::Net v;         // state -> scalar value
    neural::Net v_target;  // delayed hard copy of v
    irl::Discriminator disc;
    neural::OptState actor_opt, q_opt, v_opt, disc_opt;
    long critic_updates = 0;
};

inline PolicyBundle make_bundle(int d_state, int n_items, int disc_input_dim,
                                const TrainConfig& config) {
    PolicyBundle b;
    std::vector<int> actor_dims{d_state};
    for (int h : config.hidden) actor_dims.push_back(h);
    actor_dims.push_back(n_items);
    b.actor = neural::make_net(actor_dims, neural::Activation::kTanh,
                               neural::OutputHead::kSoftmax,
                               derive_seed(config.seed, "actor"));
    std::vector<int> q_dims = actor_dims;
    b.q = neural::make_net(q_dims, neural::Activation::kTanh,
                           neural::OutputHead::kLinear, derive_seed(config.seed, "q"));
    std::vector<int> v_dims{d_state};
    for (int h : config.hidden) v_dims.push_back(h);
    v_dims.push_back(1);
    b.v = neural::make_net(v_dims, neural::Activation::kTanh,
                           neural::OutputHead::kLinear, derive_seed(config.seed, "v"));
    b.v_target = b.v;
    irl::DiscriminatorConfig dc;
    dc.hidden = config.hidden;
    dc.learning_rate = config.learning_rate;
    dc.seed = derive_seed(config.seed, "disc");
    b.disc = irl::make_discriminator(disc_input_dim, dc);
    b.actor_opt = neural::make_opt_state(b.actor, config.learning_rate);
    b.q_opt = neural::make_opt_state(b.q, config.learning_rate);
    b.v_opt = neural::make_opt_state(b.v, config.learning_rate);
    b.disc_opt = neural::make_opt_state(b.disc.net, config.learning_rate);
    return b;
}

struct ReplayItem {
    Vec state_enc;
    int action = 0;
    double reward = 0.0;
    Vec next_enc;
    bool done = false;
    Vec embedding;       // state ++ action embedding, for the discriminator
    double weight = 1.0;
    bool from_demo = false;
};

struct ReplayBuffers {
    std::vector<ReplayItem> env_items;  // ring buffer
    std::size_t env_capacity = 20000;
    std::size_t env_write = 0;
    bool env_full = false;

    std::vector<ReplayItem> demo_items;
    Vec demo_cumulative;  // prefix sums of demo weights for priority sampling

    std::size_t env_size() const { return env_full ? env_capacity : env_write; }

    void push_env(ReplayItem item) {
        if (env_items.size() < env_capacity) {
            env_items.push_back(std::move(item));
            env_write = env_items.size() % env_capacity;
            env_full = env_items.size() == env_capacity;
        } else {
            env_items[env_write] = std::move(item);
            env_write = (env_write + 1) % env_capacity;
            env_full = true;
        }
    }

    // Demo sampling priority proportional to the (normalized, clipped) weight.
    void set_demo_weights(const Vec& weights) {
        if (weights.size() != demo_items.size())
            throw UsageError("set_demo_weights: size mismatch");
        demo_cumulative.resize(weights.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            demo_items[i].weight = weights[i];
            acc += weights[i];
            demo_cumulative[i] = acc;
        }
        if (acc <= 0.0) throw NumericError("set_demo_weights: zero total weight");
    }

    std::size_t sample_demo_index(Rng& rng) const {
        double u = u01(rng) * demo_cumulative.back();
        auto it = std::lower_bound(demo_cumulative.begin(), demo_cumulative.end(), u);
        return std::min<std::size_t>(demo_cumulative.size() - 1,
                                     static_cast<std::size_t>(it - demo_cumulative.begin()));
    }
};

// Expected demo fraction = mix_ratio; demo picks follow weight-proportional
// priority; degrades to the non-empty buffer when one side is empty.
inline std::vector<const ReplayItem*> sample_mixed_batch(const ReplayBuffers& buffers,
                                                         int batch_size,
                                                         double mix_ratio, Rng& rng) {
    bool has_env = buffers.env_size() > 0;
    bool has_demo = !buffers.demo_items.empty();
    if (!has_env && !has_demo) throw UsageError("sample_mixed_batch: both buffers empty");
    std::vector<const ReplayItem*> batch;
    batch.reserve(batch_size);
    for (int i = 0; i < batch_size; ++i) {
        bool demo = has_demo && (!has_env || u01(rng) < mix_ratio);
        if (demo) {
            batch.push_back(&buffers.demo_items[buffers.sample_demo_index(rng)]);
        } else {
            std::size_t j = static_cast<std::size_t>(rng() % buffers.env_size());
            batch.push_back(&buffers.env_items[j]);
        }
    }
    return batch;
}

struct LossResult {
    double loss = 0.0;
    neural::Gradients grads;
};

struct ImitationSample {
    const Vec* state_enc;
    int action;
    double weight;
};

// L_imit = -mean over batch of w * log pi(a|s).
inline LossResult imitation_loss(const neural::Net& actor,
                                 const std::vector<ImitationSample>& batch) {
    LossResult out;
    out.grads = neural::make_zero_grads(actor);
    if (batch.empty()) return out;
    double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto& s : batch) {
        if (s.weight == 0.0) continue;
        auto cache = neural::forward_cached(actor, *s.state_enc);
        double pa = std::max(cache.output[s.action], 1e-300);
        out.loss -= s.weight * std::log(pa) * inv;
        Vec up(cache.output.size(), 0.0);
        up[s.action] = -s.weight / pa * inv;
        neural::backward_into(actor, cache, up, out.grads);
    }
    return out;
}

// L_RL = -mean_s [ E_{a~pi} Q(s,a) + alpha_ent * H(pi(.|s)) ], with the
// expectation taken exactly over the discrete action set.
inline LossResult rl_loss(const neural::Net& actor, const neural::Net& q_net,
                          const std::vector<const Vec*>& states, double alpha_ent) {
    LossResult out;
    out.grads = neural::make_zero_grads(actor);
    if (states.empty()) return out;
    double inv = 1.0 / static_cast<double>(states.size());
    for (const Vec* s : states) {
        auto cache = neural::forward_cached(actor, *s);
        const Vec& p = cache.output;
        Vec qv = neural::forward(q_net, *s);
        double eq = 0.0, ent = 0.0;
        Vec up(p.size());
        for (std::size_t a = 0; a < p.size(); ++a) {
            double logp = std::log(std::max(p[a], 1e-300));
            eq += p[a] * qv[a];
            ent -= p[a] * logp;
            // d/dp_a of [p.q + alpha*H] = q_a - alpha*(log p_a + 1)
            up[a] = -(qv[a] - alpha_ent * (logp + 1.0)) * inv;
        }
        out.loss -= (eq + alpha_ent * ent) * inv;
        neural::backward_into(actor, cache, up, out.grads);
    }
    return out;
}

inline double td_target(const PolicyBundle& bundle, const ReplayItem& item,
                        double gamma_discount, RewardSource source) {
    double r = item.reward;
    if (source != RewardSource::kWorldModel) {
        double r_irl = irl::irl_reward(bundle.disc, item.embedding);
        r = source == RewardSource::kIrl ? r_irl : 0.5 * (r + r_irl);
    }
    if (item.done) return r;
    return r + gamma_discount * neural::forward(bundle.v_target, item.next_enc)[0];
}

// One TD step on Q (demo samples scaled by their weights), one regression
// step of V toward E_{a~pi} Q(s,a), and a hard target sync on schedule.
inline double critic_update(PolicyBundle& bundle,
                            const std::vector<const ReplayItem*>& batch,
                            const TrainConfig& config) {
    if (batch.empty()) throw UsageError("critic_update: empty batch");
    double inv = 1.0 / static_cast<double>(batch.size());

    neural::Gradients q_grads = neural::make_zero_grads(bundle.q);
    double td_loss = 0.0;
    for (const ReplayItem* item : batch) {
        double y = td_target(bundle, *item, config.gamma_discount, config.reward_source);
        auto cache = neural::forward_cached(bundle.q, item->state_enc);
        double err = cache.output[item->action] - y;
        double w = item->from_demo ? item->weight : 1.0;
        td_loss += w * err * err * inv;
        Vec up(cache.output.size(), 0.0);
        up[item->action] = 2.0 * w * err * inv;
        neural::backward_into(bundle.q, cache, up, q_grads);
    }
    neural::adam_step(bundle.q, q_grads, bundle.q_opt);

    neural::Gradients v_grads = neural::make_zero_grads(bundle.v);
    for (const ReplayItem* item : batch) {
        Vec p = neural::forward(bundle.actor, item->state_enc);
        Vec qv = neural::forward(bundle.q, item->state_enc);
        double target = dot(p, qv);
        auto cache = neural::forward_cached(bundle.v, item->state_enc);
        double err = cache.output[0] - target;
        neural::backward_into(bundle.v, cache, {2.0 * err * inv}, v_grads);
    }
    neural::adam_step(bundle.v, v_grads, bundle.v_opt);

    bundle.critic_updates += 1;
    if (bundle.critic_updates % config.target_sync_interval == 0)
        bundle.v_target = bundle.v;  // hard copy
    if (!std::isfinite(td_loss)) throw NumericError("critic_update: non-finite TD loss");
    return td_loss;
}

struct PolicyUpdateResult {
    double imit_loss = 0.0;
    double rl_loss = 0.0;
    double total_loss = 0.0;
};

// One optimizer step on L = lambda_imit * L_imit + L_RL over a mixed batch.
inline PolicyUpdateResult policy_update(PolicyBundle& bundle,
                                        const std::vector<const ReplayItem*>& batch,
                                        const TrainConfig& config) {
    std::vector<ImitationSample> demo_part;
    std::vector<const Vec*> states;
    for (const ReplayItem* item : batch) {
        states.push_back(&item->state_enc);
        if (item->from_demo)
            demo_part.push_back({&item->state_enc, item->action,
                                 config.weight_imitation ? item->weight : 1.0});
    }
    LossResult imit = imitation_loss(bundle.actor, demo_part);
    LossResult rl = rl_loss(bundle.actor, bundle.q, states, config.alpha_ent);

    neural::Gradients total = std::move(rl.grads);
    neural::accumulate(total, imit.grads, config.lambda_imit);
    neural::adam_step(bundle.actor, total, bundle.actor_opt);

    PolicyUpdateResult out;
    out.imit_loss = imit.loss;
    out.rl_loss = rl.loss;
    out.total_loss = config.lambda_imit * imit.loss + rl.loss;
    if (!std::isfinite(out.total_loss))
        throw NumericError("policy_update: non-finite loss");
    return out;
}

// Categorical sampling from the actor's softmax output.
inline env::Policy make_sampling_policy(const neural::Net& actor) {
    return [&actor](const env::StateVector& state, const env::UserProfile&, Rng& rng) {
        Vec p = neural::forward(actor, state.encoding);
        double u = u01(rng);
        double acc = 0.0;
        for (std::size_t a = 0; a < p.size(); ++a) {
            acc += p[a];
            if (u <= acc) return static_cast<int>(a);
        }
        return static_cast<int>(p.size() - 1);
    };
}

inline env::Policy make_greedy_policy(const neural::Net& actor) {
    return [&actor](const env::StateVector& state, const env::UserProfile&, Rng&) {
        Vec p = neural::forward(actor, state.encoding);
        return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    };
}

struct MetricsRow {
    int round = 0;
    double td_loss = 0.0;
    double imit_loss = 0.0;
    double rl_loss = 0.0;
    double total_loss = 0.0;
    double mean_d_demo = 0.0;
    double mean_d_policy = 0.0;
    double mean_rollout_reward = 0.0;
    double mean_rollout_length = 0.0;
};

struct TrainResult {
    PolicyBundle bundle;
    std::vector<MetricsRow> metrics;
    weighting::WeightedDemoSet weights;
    weighting::ValueDemo v_demo;
};

inline double mean_disc_prob(const irl::Discriminator& disc,
                             const std::vector<Vec>& pool, std::size_t limit = 256) {
    if (pool.empty()) return 0.5;
    std::size_t n = std::min(limit, pool.size());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += irl::discriminator_prob(disc, pool[i]);
    return s / static_cast<double>(n);
}

// Phase (ii) demonstration weighting followed by the phase (iii) loop:
// world-model rollouts, critic updates, policy updates, and periodic
// discriminator refreshes with re-weighting.
inline TrainResult train(const env::WorldModel& world_model,
                         const env::Catalog& catalog, const expert::DemoSet& demos,
                         const weighting::WeightConfig& weight_config,
                         const TrainConfig& config, const env::TerminationRule& rule) {
    config.validate();
    rule.validate();
    weight_config.validate();
    if (demos.trajectories.empty()) throw UsageError("train: empty demo set");

    int d_state = env::state_dim(catalog);
    int n_items = static_cast<int>(catalog.items.size());
    TrainResult result;
    result.bundle = make_bundle(d_state, n_items, d_state + catalog.d_item, config);
    PolicyBundle& bundle = result.bundle;

    // demo buffer, flattened in trajectory order
    ReplayBuffers buffers;
    buffers.env_capacity = static_cast<std::size_t>(config.env_buffer_capacity);
    std::vector<Vec> demo_pool;
    for (std::size_t k = 0; k < demos.trajectories.size(); ++k) {
        const auto& traj = demos.trajectories[k];
        for (std::size_t t = 0; t < traj.transitions.size(); ++t) {
            const env::Transition& tr = traj.transitions[t];
            ReplayItem item;
            item.state_enc = tr.state.encoding;
            item.action = tr.action;
            item.reward = tr.reward;
            item.next_enc = tr.next_state.encoding;
            item.done = tr.done;
            item.embedding = demos.embeddings[k][t];
            item.from_demo = true;
            demo_pool.push_back(item.embedding);
            buffers.demo_items.push_back(std::move(item));
        }
    }

    Rng rng(derive_seed(config.seed, "train"));
    std::vector<Vec> policy_pool;  // recent policy rollout embeddings

    auto rollout_to_buffers = [&](std::uint64_t seed, bool store) {
        env::UserProfile user = env::make_user(
            catalog, static_cast<int>(splitmix64(seed) % 1000000),
            derive_seed(seed, "rollout_user"));
        env::Trajectory traj =
            env::rollout_world(world_model, catalog, user,
                               make_sampling_policy(bundle.actor), rule, seed);
        for (const auto& tr : traj.transitions) {
            Vec emb = concat(tr.state.encoding,
                             env::item_by_id(catalog, tr.action).embedding);
            policy_pool.push_back(emb);
            if (store) {
                ReplayItem item;
                item.state_enc = tr.state.encoding;
                item.action = tr.action;
                item.reward = tr.reward;
                item.next_enc = tr.next_state.encoding;
                item.done = tr.done;
                item.embedding = std::move(emb);
                buffers.push_env(std::move(item));
            }
        }
        return traj;
    };

    auto disc_steps = [&](int steps) {
        Rng disc_rng(derive_seed(config.seed, "disc_batches") ^ bundle.disc.update_count);
        for (int s = 0; s < steps; ++s) {
            std::vector<Vec> db, pb;
            for (int i = 0; i < config.batch_size; ++i) {
                db.push_back(demo_pool[disc_rng() % demo_pool.size()]);
                pb.push_back(policy_pool[disc_rng() % policy_pool.size()]);
            }
            irl::train_discriminator(bundle.disc, db, pb, bundle.disc_opt);
        }
    };

    // phase (ii): value network, discriminator pretrain, initial weights
    weighting::ValueDemoConfig vd_config;
    vd_config.hidden = config.hidden;
    vd_config.learning_rate = config.learning_rate;
    vd_config.seed = derive_seed(config.seed, "v_demo");
    result.v_demo = weighting::fit_value_demo(demos, weight_config.gamma_discount,
                                              vd_config);

    for (int ep = 0; ep < std::max(2, config.rollout_episodes_per_round); ++ep)
        rollout_to_buffers(derive_seed(config.seed, 500000 + ep), false);
    if (!config.disable_irl) disc_steps(config.disc_pretrain_steps);

    auto reweight = [&]() {
        if (config.use_weighting) {
            result.weights = weighting::compute_weights(
                demos, catalog, world_model, result.v_demo, bundle.disc, weight_config);
        } else {
            result.weights = weighting::WeightedDemoSet{};
            result.weights.base = &demos;
            result.weights.weight.assign(buffers.demo_items.size(), 1.0);
        }
        buffers.set_demo_weights(config.weight_replay
                                     ? result.weights.weight
                                     : Vec(buffers.demo_items.size(), 1.0));
    };
    reweight();

    // phase (iii)
    for (int round = 0; round < config.rounds; ++round) {
        MetricsRow row;
        row.round = round;

        double rollout_reward = 0.0, rollout_len = 0.0;
        for (int ep = 0; ep < config.rollout_episodes_per_round; ++ep) {
            env::Trajectory traj = rollout_to_buffers(
                derive_seed(config.seed, 1000000 + round * 1000 + ep), true);
            rollout_reward += traj.reward_sum();
            rollout_len += static_cast<double>(traj.transitions.size());
        }
        row.mean_rollout_reward = rollout_reward / config.rollout_episodes_per_round;
        row.mean_rollout_length = rollout_len / config.rollout_episodes_per_round;
        if (policy_pool.size() > 20000)
            policy_pool.erase(policy_pool.begin(),
                              policy_pool.end() - 10000);

        for (int u = 0; u < config.critic_updates_per_round; ++u) {
            auto batch = sample_mixed_batch(buffers, config.batch_size,
                                            config.mix_ratio, rng);
            row.td_loss = critic_update(bundle, batch, config);
        }
        for (int u = 0; u < config.policy_updates_per_round; ++u) {
            auto batch = sample_mixed_batch(buffers, config.batch_size,
                                            config.mix_ratio, rng);
            PolicyUpdateResult res = policy_update(bundle, batch, config);
            row.imit_loss = res.imit_loss;
            row.rl_loss = res.rl_loss;
            row.total_loss = res.total_loss;
        }

        if (!config.disable_irl && config.disc_refresh_every > 0 &&
            (round + 1) % config.disc_refresh_every == 0) {
            disc_steps(config.disc_refresh_steps);
            reweight();
        }
        row.mean_d_demo = mean_disc_prob(bundle.disc, demo_pool);
        row.mean_d_policy = mean_disc_prob(bundle.disc, policy_pool);
        result.metrics.push_back(row);
    }
    return result;
}

}  // namespace ilrec::policy

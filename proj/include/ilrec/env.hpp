#pragma once

// Ground-truth recommendation simulator, offline log generation, world-model
// learning (reward regressor + fixed state tracker), and environment stepping
// with the category-diversity termination rule.

#include <deque>
#include <functional>
#include <optional>

#include "ilrec/common.hpp"
#include "ilrec/neural.hpp"

namespace ilrec::env {

struct Item {
    int id = 0;
    Vec embedding;  // unit norm
    int category = 0;
};

struct UserProfile {
    int id = 0;
    Vec preference;
    Vec side_features;
};

struct Catalog {
    std::vector<Item> items;
    std::vector<UserProfile> users;
    int n_categories = 0;
    int d_item = 0;
    int d_side = 0;
    // Fixed projection from side features to preference space; kept so fresh
    // evaluation users can be drawn from the same population.
    Vec side_projection;  // row-major d_item x d_side
    std::uint64_t seed = 0;
};

struct TrackerParams {
    int k = 10;          // history length used by the encoder
    double decay = 0.9;  // exponential weight per step of age
};

enum class TerminationCause { kNone, kDiversityRule, kLengthCap };

struct TerminationRule {
    int window = 15;            // N
    int max_same_category = 4;  // M
    int length_cap = 100;

    void validate() const {
        if (length_cap <= 0) throw ConfigError("termination rule: length_cap must be > 0");
        if (max_same_category > window)
            throw ConfigError("termination rule: M must be <= N");
        if (window <= 0 || max_same_category <= 0)
            throw ConfigError("termination rule: N and M must be > 0");
    }
};

struct StateVector {
    Vec encoding;
    std::vector<int> history;          // last-k item ids (most recent last)
    std::vector<int> category_window;  // trailing categories for the rule
    int step_index = 0;
    bool terminal = false;
};

struct Transition {
    StateVector state;
    int action = 0;
    double reward = 0.0;
    StateVector next_state;
    bool done = false;
};

struct Trajectory {
    UserProfile user;
    std::vector<Transition> transitions;
    TerminationCause terminated_by = TerminationCause::kNone;

    double reward_sum() const {
        double s = 0.0;
        for (const auto& t : transitions) s += t.reward;
        return s;
    }
};

struct SimParams {
    double reward_temperature = 0.2;
    double noise_amp = 0.1;       // bounded uniform noise on true rewards
    double preference_drift = 0.02;
    TrackerParams tracker;
};

inline UserProfile make_user(const Catalog& catalog, int id, std::uint64_t seed) {
    Rng rng(seed);
    UserProfile u;
    u.id = id;
    u.side_features.resize(catalog.d_side);
    for (double& x : u.side_features) x = gauss(rng);
    // preference = normalize(P * side + noise); ties taste to side information
    // so a policy that only observes side features can personalize.
    Vec pref(catalog.d_item, 0.0);
    for (int r = 0; r < catalog.d_item; ++r)
        for (int c = 0; c < catalog.d_side; ++c)
            pref[r] += catalog.side_projection[static_cast<std::size_t>(r) * catalog.d_side + c] *
                       u.side_features[c];
    for (double& x : pref) x += 0.3 * gauss(rng);
    u.preference = normalized(pref);
    return u;
}

inline Catalog build_synthetic_catalog(std::uint64_t seed, int n_items,
                                       int n_categories, int d_item,
                                       int n_users = 50, int d_side = 4) {
    if (n_categories < 1 || n_items < n_categories)
        throw ConfigError("catalog: need n_items >= n_categories >= 1");
    if (d_item < 2) throw ConfigError("catalog: d_item must be >= 2");
    if (d_side < 1 || n_users < 0) throw ConfigError("catalog: bad n_users/d_side");

    Catalog cat;
    cat.n_categories = n_categories;
    cat.d_item = d_item;
    cat.d_side = d_side;
    cat.seed = seed;

    Rng rng(derive_seed(seed, "catalog"));
    std::vector<Vec> centers(n_categories);
    for (auto& c : centers) {
        c.resize(d_item);
        for (double& x : c) x = gauss(rng);
        c = normalized(c);
    }
    cat.items.reserve(n_items);
    for (int i = 0; i < n_items; ++i) {
        Item item;
        item.id = i;
        item.category = i % n_categories;  // balanced within +-1 by construction
        Vec e = centers[item.category];
        for (double& x : e) x += 0.5 * gauss(rng);
        item.embedding = normalized(e);
        cat.items.push_back(std::move(item));
    }
    cat.side_projection.resize(static_cast<std::size_t>(d_item) * d_side);
    double s = 1.0 / std::sqrt(static_cast<double>(d_side));
    for (double& x : cat.side_projection) x = s * gauss(rng);

    for (int u = 0; u < n_users; ++u)
        cat.users.push_back(make_user(cat, u, derive_seed(seed, 1000 + u)));
    return cat;
}

inline const Item& item_by_id(const Catalog& catalog, int id) {
    if (id < 0 || id >= static_cast<int>(catalog.items.size()))
        throw DataError("unknown item id " + std::to_string(id));
    return catalog.items[static_cast<std::size_t>(id)];
}

// Ground-truth rating: 1 + 4*sigmoid(<pref, emb>/T) plus bounded noise.
inline double true_reward(const UserProfile& user, const Item& item,
                          std::uint64_t noise_seed, const SimParams& params) {
    double base = 1.0 + 4.0 * sigmoid(dot(user.preference, item.embedding) /
                                      params.reward_temperature);
    double noise = 0.0;
    if (params.noise_amp > 0.0) {
        Rng rng(noise_seed);
        noise = std::uniform_real_distribution<double>(-params.noise_amp,
                                                       params.noise_amp)(rng);
    }
    return clamp(base + noise, 1.0, 5.0);
}

// Exponentially weighted average of the last k item embeddings (most recent
// weighted highest), concatenated with the user's side features. Empty
// history yields the user-only initial state.
inline StateVector encode_state(const std::vector<int>& history,
                                const UserProfile& user, const Catalog& catalog,
                                const TrackerParams& tracker) {
    if (static_cast<int>(history.size()) > tracker.k)
        throw UsageError("encode_state: history longer than k");
    Vec agg(catalog.d_item, 0.0);
    if (!history.empty()) {
        double wsum = 0.0;
        for (std::size_t j = 0; j < history.size(); ++j) {
            const Item& item = item_by_id(catalog, history[j]);
            double age = static_cast<double>(history.size() - 1 - j);
            double w = std::pow(tracker.decay, age);
            for (int d = 0; d < catalog.d_item; ++d) agg[d] += w * item.embedding[d];
            wsum += w;
        }
        for (double& x : agg) x /= wsum;
    }
    StateVector s;
    s.encoding = concat(agg, user.side_features);
    s.history = history;
    s.step_index = static_cast<int>(history.size());
    return s;
}

inline int state_dim(const Catalog& catalog) { return catalog.d_item + catalog.d_side; }

// True iff appending nothing further, the trailing window of `categories`
// already contains >= M occurrences of some category, or the cap is hit.
inline TerminationCause check_termination(const std::vector<int>& categories,
                                          const TerminationRule& rule) {
    int len = static_cast<int>(categories.size());
    int from = std::max(0, len - rule.window);
    std::vector<int> counts;
    for (int i = from; i < len; ++i) {
        int c = categories[i];
        if (c >= static_cast<int>(counts.size())) counts.resize(c + 1, 0);
        if (++counts[c] >= rule.max_same_category) return TerminationCause::kDiversityRule;
    }
    if (len >= rule.length_cap) return TerminationCause::kLengthCap;
    return TerminationCause::kNone;
}

// Count of `category` among the most recent `span` entries.
inline int recent_category_count(const std::vector<int>& categories, int category,
                                 int span) {
    int len = static_cast<int>(categories.size());
    int from = std::max(0, len - span);
    int n = 0;
    for (int i = from; i < len; ++i)
        if (categories[i] == category) ++n;
    return n;
}

struct WorldModel {
    neural::Net reward_net;  // (state encoding ++ item embedding) -> scalar
    TrackerParams tracker;
    double final_mse = 0.0;
    int epochs = 0;

    double predict_reward(const Vec& state_encoding, const Vec& item_embedding) const {
        Vec x = concat(state_encoding, item_embedding);
        return clamp(neural::forward(reward_net, x)[0], 1.0, 5.0);
    }
};

struct WorldModelConfig {
    std::vector<int> hidden = {64, 64};
    double learning_rate = 1e-3;
    int epochs = 30;
    int batch_size = 64;
    std::uint64_t seed = 0;
};

inline WorldModel fit_world_model(const std::vector<Transition>& log,
                                  const Catalog& catalog,
                                  const TrackerParams& tracker,
                                  const WorldModelConfig& config) {
    if (log.empty()) throw ConfigError("fit_world_model: empty log");
    std::vector<Vec> xs;
    Vec ys;
    xs.reserve(log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
        const Transition& t = log[i];
        Vec x = concat(t.state.encoding, item_by_id(catalog, t.action).embedding);
        if (!all_finite(x) || !std::isfinite(t.reward))
            throw DataError("fit_world_model: non-finite features at index " +
                            std::to_string(i));
        xs.push_back(std::move(x));
        ys.push_back(t.reward);
    }

    std::vector<int> dims;
    dims.push_back(static_cast<int>(xs[0].size()));
    for (int h : config.hidden) dims.push_back(h);
    dims.push_back(1);

    WorldModel model;
    model.tracker = tracker;
    model.reward_net = neural::make_net(dims, neural::Activation::kTanh,
                                        neural::OutputHead::kLinear,
                                        derive_seed(config.seed, "reward_net"));
    neural::OptState opt = neural::make_opt_state(model.reward_net, config.learning_rate);

    Rng shuffle_rng(derive_seed(config.seed, "wm_shuffle"));
    std::vector<std::size_t> order(xs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t at = 0; at < order.size(); at += config.batch_size) {
            std::size_t end = std::min(order.size(), at + config.batch_size);
            neural::Gradients grads = neural::make_zero_grads(model.reward_net);
            for (std::size_t j = at; j < end; ++j) {
                const Vec& x = xs[order[j]];
                auto cache = neural::forward_cached(model.reward_net, x);
                double err = cache.output[0] - ys[order[j]];
                neural::backward_into(model.reward_net, cache,
                                      {2.0 * err / static_cast<double>(end - at)}, grads);
            }
            neural::adam_step(model.reward_net, grads, opt);
        }
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double err = neural::forward(model.reward_net, xs[i])[0] - ys[i];
        mse += err * err;
    }
    model.final_mse = mse / static_cast<double>(xs.size());
    model.epochs = config.epochs;
    return model;
}

struct StepResult {
    StateVector next_state;
    double reward = 0.0;
    bool done = false;
    TerminationCause terminated_by = TerminationCause::kNone;
};

// One world-model step: reward from r-hat, deterministic tracker transition,
// termination from the diversity rule or the length cap.
inline StepResult step(const StateVector& state, int action, const WorldModel& model,
                       const Catalog& catalog, const UserProfile& user,
                       const TerminationRule& rule) {
    if (state.terminal) throw UsageError("step: state is terminal");
    const Item& item = item_by_id(catalog, action);

    StepResult out;
    out.reward = model.predict_reward(state.encoding, item.embedding);

    std::vector<int> history = state.history;
    history.push_back(action);
    if (static_cast<int>(history.size()) > model.tracker.k)
        history.erase(history.begin());
    out.next_state = encode_state(history, user, catalog, model.tracker);
    out.next_state.step_index = state.step_index + 1;

    out.next_state.category_window = state.category_window;
    out.next_state.category_window.push_back(item.category);
    if (static_cast<int>(out.next_state.category_window.size()) > rule.length_cap)
        out.next_state.category_window.erase(out.next_state.category_window.begin());

    out.terminated_by = check_termination(out.next_state.category_window, rule);
    // step_index may exceed the category window length when windows are
    // trimmed; enforce the cap on the interaction count directly.
    if (out.terminated_by == TerminationCause::kNone &&
        out.next_state.step_index >= rule.length_cap)
        out.terminated_by = TerminationCause::kLengthCap;
    out.done = out.terminated_by != TerminationCause::kNone;
    out.next_state.terminal = out.done;
    return out;
}

// policy(state, user, rng) -> item id
using Policy = std::function<int(const StateVector&, const UserProfile&, Rng&)>;

// One session against the ground-truth simulator. The user's preference
// drifts toward each consumed item, so diversity-aware policies earn both
// longer sessions and sustained reward.
inline Trajectory run_sim_episode(const Catalog& catalog, UserProfile user,
                                  const Policy& policy, const SimParams& params,
                                  const TerminationRule& rule, std::uint64_t seed) {
    rule.validate();
    Trajectory traj;
    traj.user = user;
    Rng policy_rng(derive_seed(seed, "policy"));
    StateVector state = encode_state({}, user, catalog, params.tracker);
    std::vector<int> categories;

    for (int t = 0;; ++t) {
        int action = policy(state, user, policy_rng);
        const Item& item = item_by_id(catalog, action);
        double reward = true_reward(user, item, derive_seed(seed, 7000 + t), params);

        categories.push_back(item.category);
        TerminationCause cause = check_termination(categories, rule);
        if (cause == TerminationCause::kNone &&
            static_cast<int>(categories.size()) >= rule.length_cap)
            cause = TerminationCause::kLengthCap;
        bool done = cause != TerminationCause::kNone;

        // drift: preference moves a small step toward the consumed item
        for (int d = 0; d < catalog.d_item; ++d)
            user.preference[d] += params.preference_drift *
                                  (item.embedding[d] - user.preference[d]);

        std::vector<int> history = state.history;
        history.push_back(action);
        if (static_cast<int>(history.size()) > params.tracker.k)
            history.erase(history.begin());
        StateVector next = encode_state(history, user, catalog, params.tracker);
        next.step_index = state.step_index + 1;
        next.category_window = categories;
        if (static_cast<int>(next.category_window.size()) > rule.length_cap)
            next.category_window.erase(
                next.category_window.begin(),
                next.category_window.end() - rule.length_cap);
        next.terminal = done;

        traj.transitions.push_back({state, action, reward, next, done});
        if (done) {
            traj.terminated_by = cause;
            break;
        }
        state = std::move(next);
    }
    return traj;
}

// Epsilon-greedy over true rewards; the default behavior policy for offline
// log generation.
inline Policy make_epsilon_greedy_behavior(const Catalog& catalog,
                                           const SimParams& params, double epsilon) {
    return [&catalog, params, epsilon](const StateVector&, const UserProfile& user,
                                       Rng& rng) {
        if (u01(rng) < epsilon)
            return static_cast<int>(rng() % catalog.items.size());
        int best = 0;
        double best_score = -1e300;
        for (const Item& item : catalog.items) {
            double s = dot(user.preference, item.embedding);
            if (s > best_score) {
                best_score = s;
                best = item.id;
            }
        }
        return best;
    };
}

inline std::vector<Transition> generate_offline_log(const Catalog& catalog,
                                                    const Policy& behavior,
                                                    int n_episodes,
                                                    std::uint64_t seed,
                                                    const SimParams& params,
                                                    const TerminationRule& rule) {
    if (catalog.items.empty()) throw ConfigError("generate_offline_log: empty catalog");
    if (catalog.users.empty()) throw ConfigError("generate_offline_log: no users");
    std::vector<Transition> log;
    for (int ep = 0; ep < n_episodes; ++ep) {
        const UserProfile& u = catalog.users[ep % catalog.users.size()];
        Trajectory traj =
            run_sim_episode(catalog, u, behavior, params, rule, derive_seed(seed, ep));
        for (auto& t : traj.transitions) log.push_back(std::move(t));
    }
    return log;
}

// Rollout inside the learned world model (no drift, rewards from r-hat).
inline Trajectory rollout_world(const WorldModel& model, const Catalog& catalog,
                                const UserProfile& user, const Policy& policy,
                                const TerminationRule& rule, std::uint64_t seed) {
    rule.validate();
    Trajectory traj;
    traj.user = user;
    Rng policy_rng(derive_seed(seed, "wm_policy"));
    StateVector state = encode_state({}, user, catalog, model.tracker);
    while (true) {
        int action = policy(state, user, policy_rng);
        StepResult r = step(state, action, model, catalog, user, rule);
        traj.transitions.push_back({state, action, r.reward, r.next_state, r.done});
        if (r.done) {
            traj.terminated_by = r.terminated_by;
            break;
        }
        state = std::move(r.next_state);
    }
    return traj;
}

}  // namespace ilrec::env

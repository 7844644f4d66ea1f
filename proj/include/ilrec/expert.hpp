#pragma once

// Demonstration generation via the four-module expert (Reflector, Planner,
// Actor, Critic) with similarity-gated memory stores, backed by a pluggable
// text-policy provider. The default scripted provider is a deterministic,
// termination-aware heuristic standing in for a frozen LLM; it injects a
// configurable error rate so demonstrations stay plausibly suboptimal.

#include <map>
#include <memory>
#include <sstream>

#include "ilrec/common.hpp"
#include "ilrec/env.hpp"

namespace ilrec::expert {

struct MemoryEntry {
    Vec key;           // retrieval embedding
    std::string text;  // textual payload (provider-facing)
    Vec payload_vec;   // structured payload, when applicable
    double value = 0.0;
    bool has_value = false;
    int source_episode = -1;
};

struct MemoryStore {
    std::vector<MemoryEntry> entries;
    double threshold = 0.7;  // tau, applied to min-max normalized cosine
    std::size_t capacity = 512;

    void insert(MemoryEntry entry) {
        if (entry.key.empty()) throw UsageError("memory insert: empty key");
        if (entries.size() >= capacity)
            entries.erase(entries.begin());  // FIFO eviction
        entries.push_back(std::move(entry));
    }
};

// Entries whose min-max normalized cosine similarity to the query strictly
// exceeds tau. A single entry (or all-equal scores) normalizes to 1.0.
inline std::vector<const MemoryEntry*> retrieve(const MemoryStore& memory,
                                                const Vec& query) {
    std::vector<const MemoryEntry*> out;
    if (memory.entries.empty()) return out;
    Vec sims;
    sims.reserve(memory.entries.size());
    for (const auto& e : memory.entries) sims.push_back(cosine(e.key, query));
    double lo = *std::min_element(sims.begin(), sims.end());
    double hi = *std::max_element(sims.begin(), sims.end());
    for (std::size_t i = 0; i < sims.size(); ++i) {
        double norm = (hi - lo < 1e-12) ? 1.0 : (sims[i] - lo) / (hi - lo);
        if (norm > memory.threshold) out.push_back(&memory.entries[i]);
    }
    return out;
}

struct Reflection {
    std::string text;
    int overused_category = -1;        // category that triggered termination
    std::vector<int> top_categories;   // highest mean-reward categories
    int episode_id = -1;
    Vec key;
};

struct Guidance {
    std::string text;
    std::vector<int> preferred_categories;  // ranked, best first
};

struct ProviderConfig {
    double temperature = 0.5;
    double error_rate = 0.1;        // fraction of steps picking the 2nd-best category
    double act_temperature = 0.1;   // sharpness of the actor's item weighting
    int expected_horizon = 10;      // critic fallback horizon estimate
    std::uint64_t seed = 0;
};

// Text-policy provider interface. The scripted provider works on the
// structured forms directly; the external provider renders prompts and
// parses completions, exposing the same interface.
class Provider {
public:
    virtual ~Provider() = default;
    virtual Reflection reflect(const env::Trajectory& episode, int episode_id,
                               const env::Catalog& catalog,
                               const env::TerminationRule& rule) = 0;
    virtual Guidance plan(const env::StateVector& state, const env::UserProfile& user,
                          const std::vector<const MemoryEntry*>& reflections,
                          const env::Catalog& catalog,
                          const env::TerminationRule& rule) = 0;
    virtual Vec act(const env::StateVector& state, const Guidance& guidance,
                    const env::UserProfile& user,
                    const std::vector<const MemoryEntry*>& retrieved,
                    const env::Catalog& catalog) = 0;
    virtual double critic_value(const env::StateVector& state,
                                const std::vector<const MemoryEntry*>& retrieved) = 0;
};

// Mean item affinity per category under the (drift-free) user preference.
inline Vec category_affinities(const env::UserProfile& user,
                               const env::Catalog& catalog) {
    Vec sums(catalog.n_categories, 0.0);
    std::vector<int> counts(catalog.n_categories, 0);
    for (const auto& item : catalog.items) {
        sums[item.category] += dot(user.preference, item.embedding);
        counts[item.category] += 1;
    }
    for (int c = 0; c < catalog.n_categories; ++c)
        if (counts[c] > 0) sums[c] /= counts[c];
    return sums;
}

class ScriptedProvider : public Provider {
public:
    explicit ScriptedProvider(ProviderConfig config) : config_(config) {}

    Reflection reflect(const env::Trajectory& episode, int episode_id,
                       const env::Catalog& catalog,
                       const env::TerminationRule& rule) override {
        if (episode.transitions.empty() || !episode.transitions.back().done)
            throw UsageError("reflect: episode is not complete");
        Reflection r;
        r.episode_id = episode_id;

        std::map<int, std::pair<double, int>> by_cat;  // category -> (reward sum, count)
        std::vector<int> categories;
        for (const auto& t : episode.transitions) {
            int c = env::item_by_id(catalog, t.action).category;
            by_cat[c].first += t.reward;
            by_cat[c].second += 1;
            categories.push_back(c);
        }
        if (episode.terminated_by == env::TerminationCause::kDiversityRule) {
            // the category with >= M occurrences in the trailing window
            for (const auto& [c, _] : by_cat) {
                if (env::recent_category_count(categories, c, rule.window) >=
                    rule.max_same_category) {
                    r.overused_category = c;
                    break;
                }
            }
        }
        std::vector<std::pair<double, int>> ranked;
        for (const auto& [c, agg] : by_cat)
            ranked.push_back({agg.first / agg.second, c});
        std::sort(ranked.begin(), ranked.end(),
                  [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                  });
        for (std::size_t i = 0; i < ranked.size() && i < 3; ++i)
            r.top_categories.push_back(ranked[i].second);

        r.key = episode.transitions.back().next_state.encoding;
        std::ostringstream os;
        os << "episode " << episode_id << ": top categories";
        for (int c : r.top_categories) os << ' ' << c;
        if (r.overused_category >= 0)
            os << "; category " << r.overused_category
               << " was over-recommended and ended the session";
        r.text = os.str();
        return r;
    }

    Guidance plan(const env::StateVector& state, const env::UserProfile& user,
                  const std::vector<const MemoryEntry*>& reflections,
                  const env::Catalog& catalog,
                  const env::TerminationRule& rule) override {
        Vec affinity = category_affinities(user, catalog);
        std::vector<int> ranking(catalog.n_categories);
        for (int c = 0; c < catalog.n_categories; ++c) ranking[c] = c;
        std::sort(ranking.begin(), ranking.end(), [&](int a, int b) {
            return affinity[a] != affinity[b] ? affinity[a] > affinity[b] : a < b;
        });

        // Categories one pick away from the M-in-N rule are excluded; ones
        // flagged by retrieved reflections are demoted to the back.
        std::vector<bool> demoted(catalog.n_categories, false);
        for (const MemoryEntry* e : reflections) {
            int flagged = static_cast<int>(e->value);
            if (e->has_value && flagged >= 0 && flagged < catalog.n_categories)
                demoted[flagged] = true;
        }
        std::vector<int> allowed, tail;
        for (int c : ranking) {
            int recent = env::recent_category_count(state.category_window, c,
                                                    rule.window - 1);
            if (recent >= rule.max_same_category - 1) continue;  // imminent termination
            (demoted[c] ? tail : allowed).push_back(c);
        }
        allowed.insert(allowed.end(), tail.begin(), tail.end());
        if (allowed.empty()) allowed.push_back(ranking.front());

        // Suboptimality injection: on a deterministic fraction of steps the
        // guidance leads with the raw 2nd-best affinity category, ignoring the
        // termination screen; this occasionally walks into the diversity rule.
        std::uint64_t h = derive_seed(config_.seed,
                                      splitmix64((static_cast<std::uint64_t>(user.id) << 20) ^
                                                 static_cast<std::uint64_t>(state.step_index)));
        bool err = (static_cast<double>(h >> 11) * 0x1.0p-53) < config_.error_rate;
        Guidance g;
        if (err && ranking.size() >= 2) {
            g.preferred_categories.push_back(ranking[1]);
            for (int c : allowed)
                if (c != ranking[1]) g.preferred_categories.push_back(c);
        } else {
            g.preferred_categories = allowed;
        }
        std::ostringstream os;
        os << "prefer categories";
        for (int c : g.preferred_categories) os << ' ' << c;
        g.text = os.str();
        return g;
    }

    Vec act(const env::StateVector&, const Guidance& guidance,
            const env::UserProfile& user,
            const std::vector<const MemoryEntry*>&,
            const env::Catalog& catalog) override {
        if (guidance.preferred_categories.empty())
            throw UsageError("act: guidance lists no categories");
        int target = guidance.preferred_categories.front();
        // affinity-weighted blend of the allowed category's item embeddings
        Vec indicator(catalog.d_item, 0.0);
        double best = -1e300;
        for (const auto& item : catalog.items)
            if (item.category == target)
                best = std::max(best, dot(user.preference, item.embedding));
        for (const auto& item : catalog.items) {
            if (item.category != target) continue;
            double w = std::exp((dot(user.preference, item.embedding) - best) /
                                config_.act_temperature);
            for (int d = 0; d < catalog.d_item; ++d)
                indicator[d] += w * item.embedding[d];
        }
        if (norm2(indicator) < 1e-12)
            throw NumericError("act: degenerate indicator");
        return normalized(indicator);
    }

    double critic_value(const env::StateVector& state,
                        const std::vector<const MemoryEntry*>& retrieved) override {
        double sum = 0.0;
        int n = 0;
        for (const MemoryEntry* e : retrieved)
            if (e->has_value) {
                sum += e->value;
                ++n;
            }
        if (n > 0) return sum / n;
        // fallback: midpoint reward times an estimated remaining horizon
        int remaining = std::max(1, config_.expected_horizon - state.step_index);
        return 3.0 * remaining;
    }

private:
    ProviderConfig config_;
};

// Similarity-gated memories of the three roles plus provider handle.
struct ExpertModules {
    std::shared_ptr<Provider> provider;
    MemoryStore planner_memory;
    MemoryStore actor_memory;
    MemoryStore critic_memory;
};

inline ExpertModules make_scripted_expert(const ProviderConfig& config,
                                          double tau_p = 0.7, double tau_a = 0.7,
                                          double tau_c = 0.7,
                                          std::size_t capacity = 512) {
    ExpertModules m;
    m.provider = std::make_shared<ScriptedProvider>(config);
    m.planner_memory.threshold = tau_p;
    m.actor_memory.threshold = tau_a;
    m.critic_memory.threshold = tau_c;
    m.planner_memory.capacity = m.actor_memory.capacity = m.critic_memory.capacity =
        capacity;
    return m;
}

// Reflect on a finished episode and append the reflection to planner memory.
inline Reflection reflect(ExpertModules& modules, const env::Trajectory& episode,
                          int episode_id, const env::Catalog& catalog,
                          const env::TerminationRule& rule) {
    Reflection r = modules.provider->reflect(episode, episode_id, catalog, rule);
    MemoryEntry e;
    e.key = r.key;
    e.text = r.text;
    e.value = r.overused_category;
    e.has_value = r.overused_category >= 0;
    e.source_episode = episode_id;
    modules.planner_memory.insert(std::move(e));
    return r;
}

inline Guidance plan(ExpertModules& modules, const env::StateVector& state,
                     const env::UserProfile& user, const env::Catalog& catalog,
                     const env::TerminationRule& rule) {
    auto retrieved = retrieve(modules.planner_memory, state.encoding);
    return modules.provider->plan(state, user, retrieved, catalog, rule);
}

inline Vec act(ExpertModules& modules, const env::StateVector& state,
               const Guidance& guidance, const env::UserProfile& user,
               const env::Catalog& catalog) {
    auto retrieved = retrieve(modules.actor_memory, state.encoding);
    return modules.provider->act(state, guidance, user, retrieved, catalog);
}

// Argmax cosine similarity over the catalog; ties break to the lowest id.
inline int select_item(const Vec& indicator, const env::Catalog& catalog) {
    if (catalog.items.empty()) throw UsageError("select_item: empty catalog");
    if (norm2(indicator) < 1e-12) throw UsageError("select_item: zero indicator");
    int best = -1;
    double best_sim = -2.0;
    for (const auto& item : catalog.items) {
        double s = cosine(indicator, item.embedding);
        if (s > best_sim) {
            best_sim = s;
            best = item.id;
        }
    }
    return best;
}

inline double critic_value(ExpertModules& modules, const env::StateVector& state) {
    auto retrieved = retrieve(modules.critic_memory, state.encoding);
    return modules.provider->critic_value(state, retrieved);
}

// A2C-style advantage over the critic's value estimates: r + gamma*V(s') - V(s).
inline double expert_advantage(double reward, double v_llm, double v_llm_next,
                               double gamma_discount) {
    if (!std::isfinite(v_llm) || !std::isfinite(v_llm_next))
        throw NumericError("expert_advantage: non-finite value estimate");
    return reward + gamma_discount * v_llm_next - v_llm;
}

struct DemoSet {
    std::vector<env::Trajectory> trajectories;
    // per transition: state encoding ++ selected item embedding
    std::vector<std::vector<Vec>> embeddings;
    std::vector<std::vector<double>> expert_advantages;

    std::size_t transition_count() const {
        std::size_t n = 0;
        for (const auto& t : trajectories) n += t.transitions.size();
        return n;
    }
};

struct CollectConfig {
    int n_users = 50;
    double gamma_discount = 0.95;
    std::uint64_t seed = 0;
};

// One episode per simulated user inside the world model: plan -> act ->
// select -> critic each step, reflect at episode end. Memory writes are
// serialized in user order to keep collection reproducible.
inline DemoSet collect_demonstrations(const env::WorldModel& world_model,
                                      const env::Catalog& catalog,
                                      ExpertModules& modules,
                                      const env::TerminationRule& rule,
                                      const CollectConfig& config) {
    DemoSet demos;
    for (int u = 0; u < config.n_users; ++u) {
        env::UserProfile user =
            env::make_user(catalog, u, derive_seed(config.seed, u));
        env::Trajectory traj;
        traj.user = user;
        std::vector<Vec> embs;
        std::vector<double> advs;

        env::StateVector state = env::encode_state({}, user, catalog, world_model.tracker);
        double v_prev = critic_value(modules, state);
        while (true) {
            Guidance g = plan(modules, state, user, catalog, rule);
            Vec indicator = act(modules, state, g, user, catalog);
            int action = select_item(indicator, catalog);
            env::StepResult r = env::step(state, action, world_model, catalog, user, rule);

            double v_next = r.done ? 0.0 : critic_value(modules, r.next_state);
            advs.push_back(expert_advantage(r.reward, v_prev, v_next,
                                            config.gamma_discount));
            // critic memory update with the observed one-step value target
            MemoryEntry ce;
            ce.key = state.encoding;
            ce.value = r.reward + config.gamma_discount * v_next;
            ce.has_value = true;
            ce.source_episode = u;
            modules.critic_memory.insert(std::move(ce));
            // actor memory keeps the chosen state-action pair
            MemoryEntry ae;
            ae.key = state.encoding;
            ae.payload_vec = env::item_by_id(catalog, action).embedding;
            ae.source_episode = u;
            modules.actor_memory.insert(std::move(ae));

            embs.push_back(concat(state.encoding,
                                  env::item_by_id(catalog, action).embedding));
            traj.transitions.push_back({state, action, r.reward, r.next_state, r.done});
            if (r.done) {
                traj.terminated_by = r.terminated_by;
                break;
            }
            state = std::move(r.next_state);
            v_prev = v_next;
        }
        reflect(modules, traj, u, catalog, rule);
        demos.trajectories.push_back(std::move(traj));
        demos.embeddings.push_back(std::move(embs));
        demos.expert_advantages.push_back(std::move(advs));
    }
    return demos;
}

// Adapter so the expert can be evaluated as an ordinary policy against the
// ground-truth simulator.
inline env::Policy make_expert_policy(std::shared_ptr<ExpertModules> modules,
                                      const env::Catalog& catalog,
                                      const env::TerminationRule& rule) {
    return [modules, &catalog, rule](const env::StateVector& state,
                                     const env::UserProfile& user, Rng&) {
        Guidance g = plan(*modules, state, user, catalog, rule);
        Vec indicator = act(*modules, state, g, user, catalog);
        return select_item(indicator, catalog);
    };
}

}  // namespace ilrec::expert

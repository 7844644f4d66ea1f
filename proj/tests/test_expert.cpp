#include <doctest.h>

#include "ilrec/expert.hpp"

using namespace ilrec;
using namespace ilrec::env;
using namespace ilrec::expert;

namespace {

MemoryEntry entry_with_key(Vec key, double value = 0.0, bool has_value = false) {
    MemoryEntry e;
    e.key = std::move(key);
    e.value = value;
    e.has_value = has_value;
    return e;
}

struct Fixture {
    Catalog cat = build_synthetic_catalog(31, 40, 4, 8);
    SimParams params;
    TerminationRule rule{15, 4, 100};
    WorldModel model;

    Fixture() {
        params.noise_amp = 0.1;
        auto log = generate_offline_log(
            cat, make_epsilon_greedy_behavior(cat, params, 0.3), 150, 3, params, rule);
        WorldModelConfig wmc;
        wmc.epochs = 15;
        model = fit_world_model(log, cat, params.tracker, wmc);
    }
};

}  // namespace

TEST_CASE("memory retrieve") {
    SUBCASE("empty store retrieves nothing") {
        MemoryStore m;
        CHECK(retrieve(m, {1.0, 0.0}).empty());
    }
    SUBCASE("singleton entry normalizes to 1.0 and is retrieved") {
        MemoryStore m;
        m.insert(entry_with_key({0.0, 1.0}));  // orthogonal to the query
        CHECK(retrieve(m, {1.0, 0.0}).size() == 1);
    }
    SUBCASE("min-max mapping: raw 0.2 and 0.9 become 0 and 1 at tau 0.5") {
        MemoryStore m;
        m.threshold = 0.5;
        // keys at known angles to the query (1, 0): cos = 0.2 and cos = 0.9
        auto key_at = [](double c) {
            return Vec{c, std::sqrt(1.0 - c * c)};
        };
        m.insert(entry_with_key(key_at(0.2), 1.0, true));
        m.insert(entry_with_key(key_at(0.9), 2.0, true));
        auto got = retrieve(m, {1.0, 0.0});
        REQUIRE(got.size() == 1);
        CHECK(got[0]->value == 2.0);
    }
    SUBCASE("threshold 1.0 boundary is strict: the max itself is excluded") {
        MemoryStore m;
        m.threshold = 1.0;
        m.insert(entry_with_key({1.0, 0.0}));
        m.insert(entry_with_key({0.0, 1.0}));
        CHECK(retrieve(m, {1.0, 0.0}).empty());
    }
    SUBCASE("retrieved set shrinks monotonically as tau grows") {
        Rng rng(5);
        MemoryStore m;
        for (int i = 0; i < 30; ++i) {
            Vec k(6);
            for (double& x : k) x = gauss(rng);
            m.insert(entry_with_key(normalized(k)));
        }
        Vec q(6);
        for (double& x : q) x = gauss(rng);
        std::size_t prev = m.entries.size() + 1;
        for (double tau : {0.0, 0.25, 0.5, 0.75, 0.95}) {
            m.threshold = tau;
            std::size_t n = retrieve(m, q).size();
            CHECK(n <= prev);
            prev = n;
        }
    }
    SUBCASE("FIFO eviction at capacity") {
        MemoryStore m;
        m.capacity = 3;
        for (int i = 0; i < 5; ++i) m.insert(entry_with_key({1.0, 0.0}, i, true));
        REQUIRE(m.entries.size() == 3);
        CHECK(m.entries.front().value == 2.0);
        CHECK(m.entries.back().value == 4.0);
    }
    SUBCASE("empty key rejected") {
        MemoryStore m;
        CHECK_THROWS_AS(m.insert(entry_with_key({})), UsageError);
    }
}

TEST_CASE("select_item") {
    Catalog cat = build_synthetic_catalog(41, 20, 4, 8);
    SUBCASE("matches a brute-force argmax over cosines") {
        Rng rng(7);
        for (int trial = 0; trial < 50; ++trial) {
            Vec ind(cat.d_item);
            for (double& x : ind) x = gauss(rng);
            int best = 0;
            double best_sim = -2.0;
            for (const auto& item : cat.items) {
                double s = cosine(ind, item.embedding);
                if (s > best_sim) {
                    best_sim = s;
                    best = item.id;
                }
            }
            CHECK(select_item(ind, cat) == best);
        }
    }
    SUBCASE("exact indicator selects its own item") {
        CHECK(select_item(cat.items[13].embedding, cat) == 13);
    }
    SUBCASE("ties break to the lowest id") {
        Catalog tiny = cat;
        tiny.items.resize(3);
        tiny.items[1].embedding = tiny.items[2].embedding;  // ids 1 and 2 tie
        CHECK(select_item(tiny.items[2].embedding, tiny) < 2);
    }
    SUBCASE("zero indicator rejected") {
        CHECK_THROWS_AS(select_item(Vec(cat.d_item, 0.0), cat), UsageError);
    }
}

TEST_CASE("scripted provider") {
    Fixture f;
    ProviderConfig pc;
    pc.seed = 11;

    SUBCASE("plan is deterministic and leads with a high-affinity category") {
        pc.error_rate = 0.0;
        ScriptedProvider p(pc);
        const UserProfile& u = f.cat.users[0];
        StateVector s = encode_state({}, u, f.cat, f.params.tracker);
        Guidance a = p.plan(s, u, {}, f.cat, f.rule);
        Guidance b = p.plan(s, u, {}, f.cat, f.rule);
        CHECK(a.preferred_categories == b.preferred_categories);
        Vec aff = category_affinities(u, f.cat);
        int best = static_cast<int>(std::max_element(aff.begin(), aff.end()) -
                                    aff.begin());
        CHECK(a.preferred_categories.front() == best);
    }
    SUBCASE("plan screens out a category one pick from termination") {
        pc.error_rate = 0.0;
        ScriptedProvider p(pc);
        const UserProfile& u = f.cat.users[1];
        Vec aff = category_affinities(u, f.cat);
        int best = static_cast<int>(std::max_element(aff.begin(), aff.end()) -
                                    aff.begin());
        // fabricate a window already holding M-1 picks of the best category
        StateVector s = encode_state({}, u, f.cat, f.params.tracker);
        s.category_window.assign(f.rule.max_same_category - 1, best);
        s.step_index = f.rule.max_same_category - 1;
        Guidance g = p.plan(s, u, {}, f.cat, f.rule);
        for (int c : g.preferred_categories) CHECK(c != best);
    }
    SUBCASE("error steps lead with the raw second-best category") {
        pc.error_rate = 1.0;
        ScriptedProvider p(pc);
        const UserProfile& u = f.cat.users[2];
        StateVector s = encode_state({}, u, f.cat, f.params.tracker);
        Guidance g = p.plan(s, u, {}, f.cat, f.rule);
        Vec aff = category_affinities(u, f.cat);
        std::vector<int> order(f.cat.n_categories);
        for (int c = 0; c < f.cat.n_categories; ++c) order[c] = c;
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return aff[a] > aff[b]; });
        CHECK(g.preferred_categories.front() == order[1]);
    }
    SUBCASE("error frequency is near the configured rate") {
        pc.error_rate = 0.1;
        ScriptedProvider p(pc);
        const UserProfile& u = f.cat.users[3];
        Vec aff = category_affinities(u, f.cat);
        std::vector<int> order(f.cat.n_categories);
        for (int c = 0; c < f.cat.n_categories; ++c) order[c] = c;
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return aff[a] > aff[b]; });
        int errors = 0;
        const int trials = 2000;
        for (int step = 0; step < trials; ++step) {
            StateVector s = encode_state({}, u, f.cat, f.params.tracker);
            s.step_index = step;
            Guidance g = p.plan(s, u, {}, f.cat, f.rule);
            if (g.preferred_categories.front() == order[1]) ++errors;
        }
        CHECK(errors > trials * 0.05);
        CHECK(errors < trials * 0.15);
    }
    SUBCASE("reflect flags the terminating category and ranks by mean reward") {
        ScriptedProvider p(pc);
        TerminationRule tight{5, 2, 100};
        Policy repeat_cat0 = [&](const StateVector& s, const UserProfile&, Rng&) {
            return (s.step_index % 2 == 0) ? 0 : 4;  // both category 0
        };
        Trajectory traj = run_sim_episode(f.cat, f.cat.users[0], repeat_cat0,
                                          f.params, tight, 99);
        REQUIRE(traj.terminated_by == TerminationCause::kDiversityRule);
        Reflection r = p.reflect(traj, 7, f.cat, tight);
        CHECK(r.overused_category == 0);
        CHECK(r.episode_id == 7);
        CHECK_FALSE(r.top_categories.empty());
        CHECK(r.key == traj.transitions.back().next_state.encoding);
    }
    SUBCASE("reflect on an incomplete episode is a usage error") {
        ScriptedProvider p(pc);
        Trajectory traj;
        CHECK_THROWS_AS(p.reflect(traj, 0, f.cat, f.rule), UsageError);
    }
    SUBCASE("act blends items of the leading category only") {
        ScriptedProvider p(pc);
        const UserProfile& u = f.cat.users[0];
        StateVector s = encode_state({}, u, f.cat, f.params.tracker);
        Guidance g;
        g.preferred_categories = {2};
        Vec ind = p.act(s, g, u, {}, f.cat);
        CHECK(norm2(ind) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(item_by_id(f.cat, select_item(ind, f.cat)).category == 2);
    }
    SUBCASE("critic value averages retrieved values, with horizon fallback") {
        ScriptedProvider provider(pc);
        StateVector s;
        s.step_index = 4;
        MemoryEntry a = entry_with_key({1.0}, 10.0, true);
        MemoryEntry b = entry_with_key({1.0}, 20.0, true);
        MemoryEntry no_val = entry_with_key({1.0});
        CHECK(provider.critic_value(s, {&a, &b, &no_val}) == doctest::Approx(15.0));
        // fallback: 3.0 * max(1, expected_horizon - step_index)
        CHECK(provider.critic_value(s, {}) ==
              doctest::Approx(3.0 * (pc.expected_horizon - 4)));
        s.step_index = 50;
        CHECK(provider.critic_value(s, {}) == doctest::Approx(3.0));
    }
}

TEST_CASE("expert_advantage arithmetic") {
    CHECK(expert_advantage(4.0, 30.0, 28.0, 0.95) ==
          doctest::Approx(4.0 + 0.95 * 28.0 - 30.0).epsilon(1e-15));
    CHECK(expert_advantage(2.0, 10.0, 0.0, 0.9) == doctest::Approx(-8.0));
    CHECK_THROWS_AS(expert_advantage(1.0, std::nan(""), 0.0, 0.9), NumericError);
}

TEST_CASE("collect_demonstrations") {
    Fixture f;
    ProviderConfig pc;
    pc.seed = 17;
    CollectConfig cc;
    cc.n_users = 12;
    cc.seed = 23;

    SUBCASE("shapes line up and advantages are finite") {
        ExpertModules modules = make_scripted_expert(pc);
        DemoSet demos = collect_demonstrations(f.model, f.cat, modules, f.rule, cc);
        REQUIRE(demos.trajectories.size() == 12);
        for (std::size_t i = 0; i < demos.trajectories.size(); ++i) {
            const auto& traj = demos.trajectories[i];
            REQUIRE(demos.embeddings[i].size() == traj.transitions.size());
            REQUIRE(demos.expert_advantages[i].size() == traj.transitions.size());
            CHECK(traj.transitions.back().done);
            for (const auto& e : demos.embeddings[i])
                CHECK(e.size() == static_cast<std::size_t>(state_dim(f.cat) + f.cat.d_item));
            for (double a : demos.expert_advantages[i]) CHECK(std::isfinite(a));
        }
        CHECK(demos.transition_count() > 0);
    }
    SUBCASE("collection is reproducible") {
        ExpertModules modules_a = make_scripted_expert(pc);
        ExpertModules modules_b = make_scripted_expert(pc);
        DemoSet a = collect_demonstrations(f.model, f.cat, modules_a, f.rule, cc);
        DemoSet b = collect_demonstrations(f.model, f.cat, modules_b, f.rule, cc);
        REQUIRE(a.trajectories.size() == b.trajectories.size());
        for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
            REQUIRE(a.trajectories[i].transitions.size() ==
                    b.trajectories[i].transitions.size());
            for (std::size_t j = 0; j < a.trajectories[i].transitions.size(); ++j) {
                CHECK(a.trajectories[i].transitions[j].action ==
                      b.trajectories[i].transitions[j].action);
                CHECK(a.expert_advantages[i][j] == b.expert_advantages[i][j]);
            }
        }
    }
}

TEST_CASE("expert beats a uniform-random policy on true rewards") {
    Fixture f;
    ProviderConfig pc;
    pc.seed = 29;
    auto modules = std::make_shared<ExpertModules>(make_scripted_expert(pc));
    Policy expert_policy = make_expert_policy(modules, f.cat, f.rule);
    Policy uniform = [&](const StateVector&, const UserProfile&, Rng& rng) {
        return static_cast<int>(rng() % f.cat.items.size());
    };
    double expert_mean = 0.0, random_mean = 0.0;
    int n_eps = 0, n_rand = 0;
    for (int ep = 0; ep < 100; ++ep) {
        UserProfile u = make_user(f.cat, 5000 + ep, derive_seed(77, ep));
        Trajectory te = run_sim_episode(f.cat, u, expert_policy, f.params, f.rule,
                                        derive_seed(101, ep));
        Trajectory tr = run_sim_episode(f.cat, u, uniform, f.params, f.rule,
                                        derive_seed(101, ep));
        for (const auto& t : te.transitions) {
            expert_mean += t.reward;
            ++n_eps;
        }
        for (const auto& t : tr.transitions) {
            random_mean += t.reward;
            ++n_rand;
        }
    }
    expert_mean /= n_eps;
    random_mean /= n_rand;
    CHECK(expert_mean > 1.2 * random_mean);
}

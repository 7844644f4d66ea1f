#include <doctest.h>

#include "ilrec/weighting.hpp"

using namespace ilrec;
using namespace ilrec::weighting;

namespace {

env::Trajectory trajectory_with_rewards(const Vec& rewards) {
    env::Trajectory t;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        env::Transition tr;
        tr.reward = rewards[i];
        tr.done = (i + 1 == rewards.size());
        t.transitions.push_back(std::move(tr));
    }
    return t;
}

// forward-sum oracle for discounted returns
double oracle_return(const Vec& rewards, std::size_t t, double gamma) {
    double g = 0.0, w = 1.0;
    for (std::size_t k = t; k < rewards.size(); ++k) {
        g += w * rewards[k];
        w *= gamma;
    }
    return g;
}

}  // namespace

TEST_CASE("returns") {
    SUBCASE("hand example: [1,1,1] at gamma 0.9 -> [2.71, 1.9, 1.0]") {
        Vec g = returns(trajectory_with_rewards({1.0, 1.0, 1.0}), 0.9);
        REQUIRE(g.size() == 3);
        CHECK(g[0] == doctest::Approx(2.71).epsilon(1e-12));
        CHECK(g[1] == doctest::Approx(1.9).epsilon(1e-12));
        CHECK(g[2] == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("matches the forward-sum oracle on random trajectories") {
        Rng rng(13);
        for (int trial = 0; trial < 1000; ++trial) {
            std::size_t len = 1 + rng() % 30;
            Vec rewards(len);
            for (double& r : rewards) r = 1.0 + 4.0 * u01(rng);
            double gamma = u01(rng) * 0.99;
            Vec g = returns(trajectory_with_rewards(rewards), gamma);
            for (std::size_t t = 0; t < len; ++t)
                CHECK(std::abs(g[t] - oracle_return(rewards, t, gamma)) <= 1e-10);
        }
    }
    SUBCASE("empty trajectory rejected") {
        CHECK_THROWS_AS(returns(env::Trajectory{}, 0.9), UsageError);
    }
}

TEST_CASE("advantage_demo") {
    CHECK(advantage_demo(4.0, 30.0, 28.0, 0.95, false) ==
          doctest::Approx(4.0 + 0.95 * 28.0 - 30.0).epsilon(1e-15));
    // terminal transitions drop the bootstrap term
    CHECK(advantage_demo(4.0, 30.0, 28.0, 0.95, true) == doctest::Approx(-26.0));
    CHECK_THROWS_AS(advantage_demo(1.0, std::nan(""), 0.0, 0.95, false), NumericError);
}

TEST_CASE("weight formulas, tabulated values") {
    SUBCASE("env_weight") {
        CHECK(env_weight(0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(env_weight(0.2, 1.0) == doctest::Approx(1.2214027581601699).epsilon(1e-12));
        CHECK(env_weight(1.0, 10.0) == doctest::Approx(std::exp(0.1)).epsilon(1e-12));
        CHECK(env_weight(-2.0, 0.5) == doctest::Approx(std::exp(-4.0)).epsilon(1e-12));
        CHECK_THROWS_AS(env_weight(0.0, 0.0), ConfigError);
    }
    SUBCASE("irl_weight") {
        CHECK(irl_weight(0.5, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(irl_weight(0.25, 2.0) == doctest::Approx(9.0).epsilon(1e-12));
        CHECK(irl_weight(0.25, 1.0) == doctest::Approx(3.0).epsilon(1e-12));
        // gamma 0 flattens everything to 1
        CHECK(irl_weight(0.9, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK_THROWS_AS(irl_weight(0.0, 1.0), UsageError);
        CHECK_THROWS_AS(irl_weight(1.0, 1.0), UsageError);
    }
    SUBCASE("fuse_weights") {
        // 2^0.25 * 8^0.75 = 2^(0.25 + 3*0.75) = 2^2.5
        CHECK(fuse_weights(2.0, 8.0, 0.25) ==
              doctest::Approx(5.656854249492381).epsilon(1e-12));
        CHECK(fuse_weights(3.0, 7.0, 1.0) == doctest::Approx(3.0).epsilon(1e-15));
        CHECK(fuse_weights(3.0, 7.0, 0.0) == doctest::Approx(7.0).epsilon(1e-15));
        CHECK(fuse_weights(4.0, 4.0, 0.37) == doctest::Approx(4.0).epsilon(1e-12));
        CHECK_THROWS_AS(fuse_weights(1.0, 1.0, 1.5), ConfigError);
    }
    SUBCASE("normalize_clip") {
        Vec out = normalize_clip({1.0, 3.0}, 0.1, 10.0);
        CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(out[1] == doctest::Approx(1.5).epsilon(1e-12));
        // moderate outlier: normalized but inside the clip range
        Vec mid = normalize_clip({1.0, 1.0, 1.0, 1000.0}, 0.1, 10.0);
        CHECK(mid[3] == doctest::Approx(1000.0 / 250.75).epsilon(1e-12));
        CHECK(mid[0] == 0.1);  // 1/250.75 clamps up to the floor
        // extreme outlier in a long vector hits the upper clip
        Vec w(21, 1.0);
        w[20] = 1000.0;
        Vec clipped = normalize_clip(w, 0.1, 10.0);
        CHECK(clipped[20] == 10.0);  // 1000/(1020/21) > 10
        CHECK(clipped[0] == 0.1);    // 1/(1020/21) < 0.1
        CHECK_THROWS_AS(normalize_clip({}, 0.1, 10.0), UsageError);
        CHECK_THROWS_AS(normalize_clip({0.0, 0.0}, 0.1, 10.0), NumericError);
        CHECK_THROWS_AS(normalize_clip({1.0, -1.0}, 0.1, 10.0), NumericError);
    }
}

TEST_CASE("weight formula properties over random inputs") {
    Rng rng(29);
    SUBCASE("env_weight: positive, monotone in A, unit at zero") {
        for (int i = 0; i < 10000; ++i) {
            double beta = 0.05 + 10.0 * u01(rng);
            double a1 = -5.0 + 10.0 * u01(rng);
            double a2 = a1 + 5.0 * u01(rng) + 1e-9;
            double w1 = env_weight(a1, beta);
            double w2 = env_weight(a2, beta);
            CHECK(w1 > 0.0);
            CHECK(w2 > w1);
        }
        CHECK(env_weight(0.0, 3.7) == 1.0);
    }
    SUBCASE("irl_weight: decreasing in D, crosses 1 exactly at D = 0.5") {
        for (int i = 0; i < 10000; ++i) {
            double g = 0.1 + 3.0 * u01(rng);
            double d1 = 1e-6 + (0.5 - 2e-6) * u01(rng);       // below 0.5
            double d2 = 0.5 + (0.5 - 1e-6 - 1e-9) * u01(rng);  // at or above 0.5
            CHECK(irl_weight(d1, g) > 1.0);
            CHECK(irl_weight(d2, g) <= 1.0);
            // strictly decreasing
            CHECK(irl_weight(d1, g) > irl_weight(d1 + 1e-4, g));
        }
        CHECK(irl_weight(0.5, 2.3) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("fusion: geometric mean bounds and endpoint recovery") {
        for (int i = 0; i < 10000; ++i) {
            double we = std::exp(-3.0 + 6.0 * u01(rng));
            double wi = std::exp(-3.0 + 6.0 * u01(rng));
            double alpha = u01(rng);
            double f = fuse_weights(we, wi, alpha);
            CHECK(f >= std::min(we, wi) - 1e-12);
            CHECK(f <= std::max(we, wi) + 1e-12);
        }
    }
    SUBCASE("normalize: mean becomes 1 pre-clip; scale invariance") {
        for (int trial = 0; trial < 200; ++trial) {
            std::size_t n = 2 + rng() % 50;
            Vec w(n);
            for (double& x : w) x = 0.2 + 2.0 * u01(rng);  // inside clip post-normalize
            Vec a = normalize_clip(w, 1e-9, 1e9);
            double mean = 0.0;
            for (double x : a) mean += x;
            mean /= n;
            CHECK(mean == doctest::Approx(1.0).epsilon(1e-9));
            // scaling all raw weights by a constant changes nothing
            Vec w2 = w;
            for (double& x : w2) x *= 7.25;
            Vec b = normalize_clip(w2, 1e-9, 1e9);
            for (std::size_t i = 0; i < n; ++i)
                CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("WeightConfig validation") {
    WeightConfig c;
    c.validate();  // defaults are legal
    WeightConfig bad = c;
    bad.beta = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.alpha = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.clip_high = 0.05;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("fit_value_demo on a constant-return target") {
    // single-step episodes with constant reward: every return equals 3.0
    expert::DemoSet demos;
    Rng rng(31);
    for (int i = 0; i < 60; ++i) {
        env::Trajectory t;
        env::Transition tr;
        tr.reward = 3.0;
        tr.done = true;
        tr.state.encoding.resize(6);
        for (double& x : tr.state.encoding) x = gauss(rng);
        tr.next_state.encoding = tr.state.encoding;
        t.transitions.push_back(std::move(tr));
        demos.trajectories.push_back(std::move(t));
        demos.embeddings.push_back({Vec(6, 0.0)});
        demos.expert_advantages.push_back({0.0});
    }
    ValueDemoConfig config;
    // 60 samples form one minibatch, so epochs == optimizer steps here
    config.epochs = 400;
    config.learning_rate = 1e-2;
    ValueDemo vd = fit_value_demo(demos, 0.95, config);
    CHECK(vd.final_mse < 0.01);
    Vec probe(6, 0.2);
    CHECK(vd.value(probe) == doctest::Approx(3.0).epsilon(0.2 / 3.0));
    CHECK_THROWS_AS(fit_value_demo(expert::DemoSet{}, 0.95, config), UsageError);
}

TEST_CASE("compute_weights end-to-end over a synthetic demo set") {
    env::Catalog cat = env::build_synthetic_catalog(37, 30, 5, 8);
    env::SimParams params;
    params.noise_amp = 0.1;
    env::TerminationRule rule{15, 4, 100};
    auto log = env::generate_offline_log(
        cat, env::make_epsilon_greedy_behavior(cat, params, 0.3), 120, 9, params, rule);
    env::WorldModelConfig wmc;
    wmc.epochs = 10;
    env::WorldModel model = env::fit_world_model(log, cat, params.tracker, wmc);

    expert::ProviderConfig pc;
    pc.seed = 3;
    expert::ExpertModules modules = expert::make_scripted_expert(pc);
    expert::CollectConfig cc;
    cc.n_users = 8;
    expert::DemoSet demos =
        expert::collect_demonstrations(model, cat, modules, rule, cc);

    ValueDemoConfig vdc;
    vdc.epochs = 15;
    ValueDemo vd = fit_value_demo(demos, 0.95, vdc);
    irl::Discriminator disc =
        irl::make_discriminator(env::state_dim(cat) + cat.d_item, {});

    WeightConfig wc;
    WeightedDemoSet w = compute_weights(demos, cat, model, vd, disc, wc);

    REQUIRE(w.weight.size() == demos.transition_count());
    REQUIRE(w.index.size() == w.weight.size());
    for (std::size_t i = 0; i < w.weight.size(); ++i) {
        CHECK(w.weight[i] >= wc.clip_low);
        CHECK(w.weight[i] <= wc.clip_high);
        CHECK(w.w_env[i] > 0.0);
        CHECK(w.w_irl[i] > 0.0);
        // fused slot recomputes from its parts
        CHECK(w.fused[i] ==
              doctest::Approx(fuse_weights(w.w_env[i], w.w_irl[i], wc.alpha))
                  .epsilon(1e-12));
    }
    // alpha endpoints collapse the fusion onto one side
    WeightConfig only_env = wc;
    only_env.alpha = 1.0;
    WeightedDemoSet we = compute_weights(demos, cat, model, vd, disc, only_env);
    for (std::size_t i = 0; i < we.fused.size(); ++i)
        CHECK(we.fused[i] == doctest::Approx(w.w_env[i]).epsilon(1e-12));
    WeightConfig only_irl = wc;
    only_irl.alpha = 0.0;
    WeightedDemoSet wi = compute_weights(demos, cat, model, vd, disc, only_irl);
    for (std::size_t i = 0; i < wi.fused.size(); ++i)
        CHECK(wi.fused[i] == doctest::Approx(w.w_irl[i]).epsilon(1e-12));
}

#pragma once

// Evaluation protocol (Len / R_each / R_traj with the diversity termination
// rule), the ablation suite, and hyperparameter sweeps.

#include <string>

#include "ilrec/common.hpp"
#include "ilrec/env.hpp"
#include "ilrec/policy.hpp"

namespace ilrec::evalbench {

struct EvalProtocol {
    env::TerminationRule rule;
    int n_episodes = 100;
    bool greedy = true;
    std::uint64_t seed = 0;
};

struct EpisodeRow {
    int length = 0;
    double reward_sum = 0.0;
    double reward_mean = 0.0;
};

struct Metrics {
    double len_mean = 0.0, len_std = 0.0;
    double r_each_mean = 0.0, r_each_std = 0.0;
    double r_traj_mean = 0.0, r_traj_std = 0.0;
    std::vector<EpisodeRow> episodes;
};

inline std::pair<double, double> mean_std(const Vec& xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    return {m, std::sqrt(v / static_cast<double>(xs.size()))};
}

inline Metrics metrics_from_episodes(std::vector<EpisodeRow> episodes) {
    if (episodes.empty()) throw UsageError("metrics: no episodes");
    Vec lens, eaches, trajs;
    for (const auto& e : episodes) {
        lens.push_back(static_cast<double>(e.length));
        eaches.push_back(e.reward_mean);
        trajs.push_back(e.reward_sum);
    }
    Metrics m;
    std::tie(m.len_mean, m.len_std) = mean_std(lens);
    std::tie(m.r_each_mean, m.r_each_std) = mean_std(eaches);
    std::tie(m.r_traj_mean, m.r_traj_std) = mean_std(trajs);
    m.episodes = std::move(episodes);
    return m;
}

// Fresh-user sessions against the ground-truth simulator; the policy is
// graded by the real environment, not the world model it trained against.
inline Metrics evaluate(const env::Policy& policy, const env::Catalog& catalog,
                        const env::SimParams& params, const EvalProtocol& protocol) {
    if (protocol.n_episodes < 1) throw ConfigError("evaluate: n_episodes must be >= 1");
    std::vector<EpisodeRow> rows;
    for (int ep = 0; ep < protocol.n_episodes; ++ep) {
        env::UserProfile user = env::make_user(
            catalog, 100000 + ep, derive_seed(protocol.seed, "eval_user" + std::to_string(ep)));
        env::Trajectory traj = env::run_sim_episode(
            catalog, user, policy, params, protocol.rule, derive_seed(protocol.seed, ep));
        EpisodeRow row;
        row.length = static_cast<int>(traj.transitions.size());
        row.reward_sum = traj.reward_sum();
        row.reward_mean = row.reward_sum / row.length;
        rows.push_back(row);
    }
    return metrics_from_episodes(std::move(rows));
}

enum class AblationVariant { kFull, kNoW, kNoWEnv, kNoWIrl, kNoIrlBaseline };

inline std::string variant_name(AblationVariant v) {
    switch (v) {
        case AblationVariant::kFull: return "full";
        case AblationVariant::kNoW: return "no_w";
        case AblationVariant::kNoWEnv: return "no_w_env";
        case AblationVariant::kNoWIrl: return "no_w_irl";
        default: return "no_irl_baseline";
    }
}

// Applies variant semantics to a (weighting, policy) config pair. The alpha
// endpoint is owned by the variant: passing an explicitly set alpha that
// conflicts with the variant is a configuration error.
inline void apply_variant(AblationVariant variant, weighting::WeightConfig& wc,
                          policy::TrainConfig& tc, bool alpha_explicit = false) {
    switch (variant) {
        case AblationVariant::kFull:
            break;
        case AblationVariant::kNoW:
            tc.use_weighting = false;
            break;
        case AblationVariant::kNoWEnv:
            if (alpha_explicit && wc.alpha != 0.0)
                throw ConfigError("ablation no_w_env owns weighting.alpha (must be 0)");
            wc.alpha = 0.0;
            break;
        case AblationVariant::kNoWIrl:
            if (alpha_explicit && wc.alpha != 1.0)
                throw ConfigError("ablation no_w_irl owns weighting.alpha (must be 1)");
            wc.alpha = 1.0;
            break;
        case AblationVariant::kNoIrlBaseline:
            tc.use_weighting = false;
            tc.disable_irl = true;
            break;
    }
}

struct RunOutcome {
    std::string variant;
    std::uint64_t seed = 0;
    Metrics metrics;
    policy::TrainResult train_result;
};

// Budget-matched train + evaluate for one variant; identical seeds, rounds
// and rollout counts across variants come from the shared base configs.
inline RunOutcome run_variant(AblationVariant variant, const env::WorldModel& world_model,
                              const env::Catalog& catalog, const expert::DemoSet& demos,
                              weighting::WeightConfig wc, policy::TrainConfig tc,
                              const env::SimParams& params, const EvalProtocol& protocol,
                              bool alpha_explicit = false) {
    apply_variant(variant, wc, tc, alpha_explicit);
    RunOutcome out;
    out.variant = variant_name(variant);
    out.seed = tc.seed;
    out.train_result = policy::train(world_model, catalog, demos, wc, tc, protocol.rule);
    out.metrics = evaluate(policy::make_greedy_policy(out.train_result.bundle.actor),
                           catalog, params, protocol);
    return out;
}

enum class SweepParam { kBeta, kAlpha, kAlphaEnt, kLambdaImit };

inline std::string sweep_param_name(SweepParam p) {
    switch (p) {
        case SweepParam::kBeta: return "beta";
        case SweepParam::kAlpha: return "alpha";
        case SweepParam::kAlphaEnt: return "alpha_ent";
        default: return "lambda_imit";
    }
}

struct SweepPoint {
    double value = 0.0;
    Metrics metrics;
};

// One full train+eval per grid value with paired seeds.
inline std::vector<SweepPoint> sweep(SweepParam param, const Vec& grid,
                                     const env::WorldModel& world_model,
                                     const env::Catalog& catalog,
                                     const expert::DemoSet& demos,
                                     const weighting::WeightConfig& base_wc,
                                     const policy::TrainConfig& base_tc,
                                     const env::SimParams& params,
                                     const EvalProtocol& protocol) {
    if (grid.empty()) throw ConfigError("sweep: empty grid");
    std::vector<SweepPoint> out;
    for (double value : grid) {
        weighting::WeightConfig wc = base_wc;
        policy::TrainConfig tc = base_tc;
        switch (param) {
            case SweepParam::kBeta: wc.beta = value; break;
            case SweepParam::kAlpha: wc.alpha = value; break;
            case SweepParam::kAlphaEnt: tc.alpha_ent = value; break;
            case SweepParam::kLambdaImit: tc.lambda_imit = value; break;
        }
        auto res = policy::train(world_model, catalog, demos, wc, tc, protocol.rule);
        SweepPoint p;
        p.value = value;
        p.metrics = evaluate(policy::make_greedy_policy(res.bundle.actor), catalog,
                             params, protocol);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace ilrec::evalbench

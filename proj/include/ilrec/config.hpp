#pragma once

// Run configuration: nested sections mirroring each module's knobs, strict
// parsing (unknown keys rejected, ranges validated), and persistence of the
// fully resolved effective config.

#include <fstream>
#include <set>

#include <json.hpp>

#include "ilrec/common.hpp"
#include "ilrec/env.hpp"
#include "ilrec/evalbench.hpp"
#include "ilrec/expert.hpp"
#include "ilrec/policy.hpp"
#include "ilrec/weighting.hpp"

namespace ilrec::config {

using nlohmann::json;

struct EnvSection {
    int n_items = 20;
    int n_categories = 10;
    int d_item = 8;
    int d_side = 4;
    int n_users = 50;
    int tracker_k = 10;
    double tracker_decay = 0.9;
    double reward_temperature = 0.2;
    double noise_amp = 0.1;
    double preference_drift = 0.02;
    double behavior_epsilon = 0.3;
    int log_episodes = 500;
    int rule_window = 8;
    int rule_max_same_category = 4;
    int rule_length_cap = 100;
    std::vector<int> world_model_hidden = {64, 64};
    double world_model_lr = 1e-3;
    int world_model_epochs = 150;
    int world_model_batch = 64;
};

struct ExpertSection {
    std::string provider = "scripted";  // scripted | external
    std::string endpoint;               // external only; env override wins
    double temperature = 0.5;
    double error_rate = 0.1;
    double act_temperature = 0.1;
    int expected_horizon = 10;
    double tau_planner = 0.7;
    double tau_actor = 0.7;
    double tau_critic = 0.7;
    int memory_capacity = 512;
    int n_demo_users = 50;
    int timeout_seconds = 30;
    int retries = 2;
};

struct IrlSection {
    std::vector<int> hidden = {64, 64};
    double learning_rate = 1e-3;
    int refresh_every = 10;
    int refresh_steps = 50;
    int pretrain_steps = 100;
};

struct WeightingSection {
    double beta = 1.0;
    double gamma_irl = 1.0;
    double alpha = 0.5;
    double gamma_discount = 0.95;
    double clip_low = 0.1;
    double clip_high = 10.0;
};

struct PolicySection {
    double lambda_imit = 0.5;
    double alpha_ent = 0.01;
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
    std::string reward_source = "world_model";  // world_model | irl | mix
};

struct EvalSection {
    int n_episodes = 100;
    int n_seeds = 5;
    bool greedy = true;
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "runs/default";
    EnvSection env;
    ExpertSection expert;
    IrlSection irl;
    WeightingSection weighting;
    PolicySection policy;
    EvalSection evalbench;
    std::set<std::string> explicit_keys;  // dotted paths the user set

    bool is_explicit(const std::string& key) const {
        return explicit_keys.count(key) > 0;
    }
};

inline json to_json(const RunConfig& c) {
    return json{
        {"seed", c.seed},
        {"out_dir", c.out_dir},
        {"env",
         {{"n_items", c.env.n_items},
          {"n_categories", c.env.n_categories},
          {"d_item", c.env.d_item},
          {"d_side", c.env.d_side},
          {"n_users", c.env.n_users},
          {"tracker_k", c.env.tracker_k},
          {"tracker_decay", c.env.tracker_decay},
          {"reward_temperature", c.env.reward_temperature},
          {"noise_amp", c.env.noise_amp},
          {"preference_drift", c.env.preference_drift},
          {"behavior_epsilon", c.env.behavior_epsilon},
          {"log_episodes", c.env.log_episodes},
          {"rule_window", c.env.rule_window},
          {"rule_max_same_category", c.env.rule_max_same_category},
          {"rule_length_cap", c.env.rule_length_cap},
          {"world_model_hidden", c.env.world_model_hidden},
          {"world_model_lr", c.env.world_model_lr},
          {"world_model_epochs", c.env.world_model_epochs},
          {"world_model_batch", c.env.world_model_batch}}},
        {"expert",
         {{"provider", c.expert.provider},
          {"endpoint", c.expert.endpoint},
          {"temperature", c.expert.temperature},
          {"error_rate", c.expert.error_rate},
          {"act_temperature", c.expert.act_temperature},
          {"expected_horizon", c.expert.expected_horizon},
          {"tau_planner", c.expert.tau_planner},
          {"tau_actor", c.expert.tau_actor},
          {"tau_critic", c.expert.tau_critic},
          {"memory_capacity", c.expert.memory_capacity},
          {"n_demo_users", c.expert.n_demo_users},
          {"timeout_seconds", c.expert.timeout_seconds},
          {"retries", c.expert.retries}}},
        {"irl",
         {{"hidden", c.irl.hidden},
          {"learning_rate", c.irl.learning_rate},
          {"refresh_every", c.irl.refresh_every},
          {"refresh_steps", c.irl.refresh_steps},
          {"pretrain_steps", c.irl.pretrain_steps}}},
        {"weighting",
         {{"beta", c.weighting.beta},
          {"gamma_irl", c.weighting.gamma_irl},
          {"alpha", c.weighting.alpha},
          {"gamma_discount", c.weighting.gamma_discount},
          {"clip_low", c.weighting.clip_low},
          {"clip_high", c.weighting.clip_high}}},
        {"policy",
         {{"lambda_imit", c.policy.lambda_imit},
          {"alpha_ent", c.policy.alpha_ent},
          {"learning_rate", c.policy.learning_rate},
          {"hidden", c.policy.hidden},
          {"batch_size", c.policy.batch_size},
          {"rounds", c.policy.rounds},
          {"rollout_episodes_per_round", c.policy.rollout_episodes_per_round},
          {"critic_updates_per_round", c.policy.critic_updates_per_round},
          {"policy_updates_per_round", c.policy.policy_updates_per_round},
          {"target_sync_interval", c.policy.target_sync_interval},
          {"mix_ratio", c.policy.mix_ratio},
          {"env_buffer_capacity", c.policy.env_buffer_capacity},
          {"reward_source", c.policy.reward_source}}},
        {"evalbench",
         {{"n_episodes", c.evalbench.n_episodes},
          {"n_seeds", c.evalbench.n_seeds},
          {"greedy", c.evalbench.greedy}}}};
}

namespace detail {

inline void assign_checked(json& target, const json& src, const std::string& path,
                           std::set<std::string>& seen) {
    for (auto it = src.begin(); it != src.end(); ++it) {
        std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!target.contains(it.key()))
            throw ConfigError("unknown config key: " + key);
        json& slot = target[it.key()];
        if (slot.is_object()) {
            if (!it.value().is_object())
                throw ConfigError("config key " + key + " expects a section");
            assign_checked(slot, it.value(), key, seen);
        } else {
            if (slot.is_string() != it.value().is_string() ||
                slot.is_boolean() != it.value().is_boolean() ||
                slot.is_array() != it.value().is_array() ||
                (slot.is_number() && !it.value().is_number()))
                throw ConfigError("config key " + key + " has the wrong type");
            slot = it.value();
            seen.insert(key);
        }
    }
}

}  // namespace detail

inline void validate(const RunConfig& c) {
    auto require = [](bool ok, const std::string& key) {
        if (!ok) throw ConfigError("config range violation at " + key);
    };
    require(c.env.n_items >= c.env.n_categories && c.env.n_categories >= 1, "env.n_items");
    require(c.env.d_item >= 2, "env.d_item");
    require(c.env.d_side >= 1, "env.d_side");
    require(c.env.tracker_k >= 1, "env.tracker_k");
    require(c.env.tracker_decay > 0.0 && c.env.tracker_decay <= 1.0, "env.tracker_decay");
    require(c.env.rule_length_cap > 0, "env.rule_length_cap");
    require(c.env.rule_max_same_category >= 1 &&
                c.env.rule_max_same_category <= c.env.rule_window,
            "env.rule_max_same_category");
    require(c.env.log_episodes >= 0, "env.log_episodes");
    require(c.expert.provider == "scripted" || c.expert.provider == "external",
            "expert.provider");
    require(c.expert.temperature >= 0.0, "expert.temperature");
    require(c.expert.error_rate >= 0.0 && c.expert.error_rate <= 1.0,
            "expert.error_rate");
    require(c.expert.tau_planner >= 0.0 && c.expert.tau_planner <= 1.0,
            "expert.tau_planner");
    require(c.expert.tau_actor >= 0.0 && c.expert.tau_actor <= 1.0, "expert.tau_actor");
    require(c.expert.tau_critic >= 0.0 && c.expert.tau_critic <= 1.0,
            "expert.tau_critic");
    require(c.expert.memory_capacity >= 1, "expert.memory_capacity");
    require(c.weighting.beta > 0.0, "weighting.beta");
    require(c.weighting.gamma_irl >= 0.0, "weighting.gamma_irl");
    require(c.weighting.alpha >= 0.0 && c.weighting.alpha <= 1.0, "weighting.alpha");
    require(c.weighting.gamma_discount >= 0.0 && c.weighting.gamma_discount < 1.0,
            "weighting.gamma_discount");
    require(c.weighting.clip_low > 0.0 && c.weighting.clip_high > c.weighting.clip_low,
            "weighting.clip_low");
    require(c.policy.lambda_imit >= 0.0, "policy.lambda_imit");
    require(c.policy.alpha_ent >= 0.0, "policy.alpha_ent");
    require(c.policy.mix_ratio >= 0.0 && c.policy.mix_ratio <= 1.0, "policy.mix_ratio");
    require(c.policy.rounds >= 0, "policy.rounds");
    require(c.policy.batch_size >= 1, "policy.batch_size");
    require(c.policy.reward_source == "world_model" || c.policy.reward_source == "irl" ||
                c.policy.reward_source == "mix",
            "policy.reward_source");
    require(c.evalbench.n_episodes >= 1, "evalbench.n_episodes");
    require(c.evalbench.n_seeds >= 1, "evalbench.n_seeds");
}

inline RunConfig from_json(const json& j) {
    RunConfig c;
    json merged = to_json(c);
    std::set<std::string> seen;
    detail::assign_checked(merged, j, "", seen);

    auto gi = [&](const json& s, const char* k) { return s.at(k).get<int>(); };
    auto gd = [&](const json& s, const char* k) { return s.at(k).get<double>(); };
    auto gs = [&](const json& s, const char* k) { return s.at(k).get<std::string>(); };

    c.seed = merged.at("seed").get<std::uint64_t>();
    c.out_dir = merged.at("out_dir").get<std::string>();
    const json& e = merged.at("env");
    c.env.n_items = gi(e, "n_items");
    c.env.n_categories = gi(e, "n_categories");
    c.env.d_item = gi(e, "d_item");
    c.env.d_side = gi(e, "d_side");
    c.env.n_users = gi(e, "n_users");
    c.env.tracker_k = gi(e, "tracker_k");
    c.env.tracker_decay = gd(e, "tracker_decay");
    c.env.reward_temperature = gd(e, "reward_temperature");
    c.env.noise_amp = gd(e, "noise_amp");
    c.env.preference_drift = gd(e, "preference_drift");
    c.env.behavior_epsilon = gd(e, "behavior_epsilon");
    c.env.log_episodes = gi(e, "log_episodes");
    c.env.rule_window = gi(e, "rule_window");
    c.env.rule_max_same_category = gi(e, "rule_max_same_category");
    c.env.rule_length_cap = gi(e, "rule_length_cap");
    c.env.world_model_hidden = e.at("world_model_hidden").get<std::vector<int>>();
    c.env.world_model_lr = gd(e, "world_model_lr");
    c.env.world_model_epochs = gi(e, "world_model_epochs");
    c.env.world_model_batch = gi(e, "world_model_batch");
    const json& x = merged.at("expert");
    c.expert.provider = gs(x, "provider");
    c.expert.endpoint = gs(x, "endpoint");
    c.expert.temperature = gd(x, "temperature");
    c.expert.error_rate = gd(x, "error_rate");
    c.expert.act_temperature = gd(x, "act_temperature");
    c.expert.expected_horizon = gi(x, "expected_horizon");
    c.expert.tau_planner = gd(x, "tau_planner");
    c.expert.tau_actor = gd(x, "tau_actor");
    c.expert.tau_critic = gd(x, "tau_critic");
    c.expert.memory_capacity = gi(x, "memory_capacity");
    c.expert.n_demo_users = gi(x, "n_demo_users");
    c.expert.timeout_seconds = gi(x, "timeout_seconds");
    c.expert.retries = gi(x, "retries");
    const json& ir = merged.at("irl");
    c.irl.hidden = ir.at("hidden").get<std::vector<int>>();
    c.irl.learning_rate = gd(ir, "learning_rate");
    c.irl.refresh_every = gi(ir, "refresh_every");
    c.irl.refresh_steps = gi(ir, "refresh_steps");
    c.irl.pretrain_steps = gi(ir, "pretrain_steps");
    const json& w = merged.at("weighting");
    c.weighting.beta = gd(w, "beta");
    c.weighting.gamma_irl = gd(w, "gamma_irl");
    c.weighting.alpha = gd(w, "alpha");
    c.weighting.gamma_discount = gd(w, "gamma_discount");
    c.weighting.clip_low = gd(w, "clip_low");
    c.weighting.clip_high = gd(w, "clip_high");
    const json& p = merged.at("policy");
    c.policy.lambda_imit = gd(p, "lambda_imit");
    c.policy.alpha_ent = gd(p, "alpha_ent");
    c.policy.learning_rate = gd(p, "learning_rate");
    c.policy.hidden = p.at("hidden").get<std::vector<int>>();
    c.policy.batch_size = gi(p, "batch_size");
    c.policy.rounds = gi(p, "rounds");
    c.policy.rollout_episodes_per_round = gi(p, "rollout_episodes_per_round");
    c.policy.critic_updates_per_round = gi(p, "critic_updates_per_round");
    c.policy.policy_updates_per_round = gi(p, "policy_updates_per_round");
    c.policy.target_sync_interval = gi(p, "target_sync_interval");
    c.policy.mix_ratio = gd(p, "mix_ratio");
    c.policy.env_buffer_capacity = gi(p, "env_buffer_capacity");
    c.policy.reward_source = gs(p, "reward_source");
    const json& ev = merged.at("evalbench");
    c.evalbench.n_episodes = gi(ev, "n_episodes");
    c.evalbench.n_seeds = gi(ev, "n_seeds");
    c.evalbench.greedy = ev.at("greedy").get<bool>();

    c.explicit_keys = std::move(seen);
    validate(c);
    return c;
}

// Inline override of the form "section.key=value" (or "seed=7").
inline json override_to_json(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must be key=value: " + assignment);
    std::string path = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::parse_error&) {
        parsed = value;  // bare strings
    }
    json out = parsed;
    for (auto at = path.rfind('.'); at != std::string::npos; at = path.rfind('.')) {
        std::string leaf = path.substr(at + 1);
        path = path.substr(0, at);
        out = json{{leaf, out}};
    }
    return json{{path, out}};
}

inline RunConfig parse_config(const std::string& path,
                              const std::vector<std::string>& overrides = {}) {
    json j = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file: " + path);
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
            try {
                j = json::parse(text);
            } catch (const json::parse_error& e) {
                throw ConfigError("config parse error in " + path + ": " + e.what());
            }
        }
    }
    for (const auto& o : overrides) {
        json patch = override_to_json(o);
        j.merge_patch(patch);
    }
    return from_json(j);
}

// Deterministic hash of the effective config for manifests.
inline std::string config_hash(const RunConfig& c) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
    return buf;
}

// Construction helpers bridging config sections to module types.

inline env::TerminationRule make_rule(const RunConfig& c) {
    env::TerminationRule r;
    r.window = c.env.rule_window;
    r.max_same_category = c.env.rule_max_same_category;
    r.length_cap = c.env.rule_length_cap;
    r.validate();
    return r;
}

inline env::SimParams make_sim_params(const RunConfig& c) {
    env::SimParams p;
    p.reward_temperature = c.env.reward_temperature;
    p.noise_amp = c.env.noise_amp;
    p.preference_drift = c.env.preference_drift;
    p.tracker.k = c.env.tracker_k;
    p.tracker.decay = c.env.tracker_decay;
    return p;
}

inline weighting::WeightConfig make_weight_config(const RunConfig& c) {
    weighting::WeightConfig w;
    w.beta = c.weighting.beta;
    w.gamma_irl = c.weighting.gamma_irl;
    w.alpha = c.weighting.alpha;
    w.gamma_discount = c.weighting.gamma_discount;
    w.clip_low = c.weighting.clip_low;
    w.clip_high = c.weighting.clip_high;
    return w;
}

inline policy::TrainConfig make_train_config(const RunConfig& c, std::uint64_t seed) {
    policy::TrainConfig t;
    t.lambda_imit = c.policy.lambda_imit;
    t.alpha_ent = c.policy.alpha_ent;
    t.gamma_discount = c.weighting.gamma_discount;
    t.learning_rate = c.policy.learning_rate;
    t.hidden = c.policy.hidden;
    t.batch_size = c.policy.batch_size;
    t.rounds = c.policy.rounds;
    t.rollout_episodes_per_round = c.policy.rollout_episodes_per_round;
    t.critic_updates_per_round = c.policy.critic_updates_per_round;
    t.policy_updates_per_round = c.policy.policy_updates_per_round;
    t.target_sync_interval = c.policy.target_sync_interval;
    t.mix_ratio = c.policy.mix_ratio;
    t.env_buffer_capacity = c.policy.env_buffer_capacity;
    t.disc_refresh_every = c.irl.refresh_every;
    t.disc_refresh_steps = c.irl.refresh_steps;
    t.disc_pretrain_steps = c.irl.pretrain_steps;
    if (c.policy.reward_source == "irl")
        t.reward_source = policy::RewardSource::kIrl;
    else if (c.policy.reward_source == "mix")
        t.reward_source = policy::RewardSource::kMix;
    t.seed = seed;
    return t;
}

inline expert::ProviderConfig make_provider_config(const RunConfig& c,
                                                   std::uint64_t seed) {
    expert::ProviderConfig p;
    p.temperature = c.expert.temperature;
    p.error_rate = c.expert.error_rate;
    p.act_temperature = c.expert.act_temperature;
    p.expected_horizon = c.expert.expected_horizon;
    p.seed = seed;
    return p;
}

}  // namespace ilrec::config

// Command-line driver for the offline recommendation pipeline. Each
// subcommand reads/writes versioned artifacts inside a run directory so the
// stages can be executed independently:
//
//   simulate        -> catalog.jsonl, log.jsonl
//   fit-world-model -> world_model.net, world_model.json
//   collect-demos   -> demos.jsonl
//   train           -> actor.net, q.net, v.net, disc.net, weights.jsonl,
//                      metrics.jsonl
//   evaluate        -> eval.json
//   ablate          -> ablation.csv, ablation.json
//   sweep           -> sweep_<param>.csv
//   report          -> human-readable summary on stdout
//
// Exit codes: 0 success, 1 configuration/usage error, 2 data error,
// 3 numeric error, 4 provider error.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "ilrec/config.hpp"
#include "ilrec/evalbench.hpp"
#include "ilrec/io.hpp"
#include "ilrec/provider_http.hpp"

namespace fs = std::filesystem;
using namespace ilrec;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;  // overrides config.out_dir when set
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "JSON config file");
    cmd->add_option("-s,--set", args.overrides,
                    "inline override, section.key=value (repeatable)");
    cmd->add_option("-o,--out", args.out_dir, "run directory for artifacts");
}

config::RunConfig load_config(const CommonArgs& args) {
    config::RunConfig c = config::parse_config(args.config_path, args.overrides);
    if (!args.out_dir.empty()) c.out_dir = args.out_dir;
    return c;
}

std::string artifact(const config::RunConfig& c, const std::string& name) {
    return (fs::path(c.out_dir) / name).string();
}

void require_artifact(const config::RunConfig& c, const std::string& name,
                      const std::string& producing_command) {
    if (!fs::exists(fs::path(c.out_dir) / name))
        throw DataError("missing " + name + " in " + c.out_dir + "; run `ilrec " +
                        producing_command + "` first");
}

void write_effective_config(const config::RunConfig& c) {
    fs::create_directories(c.out_dir);
    std::ofstream out(artifact(c, "effective_config.json"));
    if (!out) throw DataError("cannot write effective_config.json in " + c.out_dir);
    out << config::to_json(c).dump(2) << '\n';
}

void append_manifest(const config::RunConfig& c, const std::string& stage,
                     const std::vector<std::string>& outputs) {
    fs::create_directories(c.out_dir);
    std::string path = artifact(c, "manifest.json");
    json manifest = json::object();
    if (fs::exists(path)) {
        std::ifstream in(path);
        try {
            manifest = json::parse(in);
        } catch (const json::parse_error&) {
            manifest = json::object();
        }
    }
    manifest["config_hash"] = config::config_hash(c);
    manifest["seed"] = c.seed;
    manifest["stages"][stage] = json{{"outputs", outputs}};
    io::write_manifest(path, manifest);
}

std::shared_ptr<expert::Provider> make_provider(const config::RunConfig& c,
                                                std::uint64_t seed) {
    if (c.expert.provider == "external") {
        expert::ExternalProviderConfig ec;
        ec.endpoint = c.expert.endpoint;
        ec.temperature = c.expert.temperature;
        ec.timeout_seconds = c.expert.timeout_seconds;
        ec.retries = c.expert.retries;
        ec = expert::external_config_from_env(ec);
        return std::make_shared<expert::ExternalProvider>(ec);
    }
    return std::make_shared<expert::ScriptedProvider>(
        config::make_provider_config(c, seed));
}

env::Catalog build_catalog(const config::RunConfig& c) {
    return env::build_synthetic_catalog(derive_seed(c.seed, "catalog"), c.env.n_items,
                                        c.env.n_categories, c.env.d_item,
                                        c.env.n_users, c.env.d_side);
}

// ---- subcommand bodies ----

void cmd_simulate(const CommonArgs& args) {
    config::RunConfig c = load_config(args);
    env::Catalog catalog = build_catalog(c);
    env::SimParams params = config::make_sim_params(c);
    env::TerminationRule rule = config::make_rule(c);
    auto log = env::generate_offline_log(
        catalog, env::make_epsilon_greedy_behavior(catalog, params, c.env.behavior_epsilon),
        c.env.log_episodes, derive_seed(c.seed, "offline_log"), params, rule);

    write_effective_config(c);
    io::save_catalog(catalog, artifact(c, "catalog.jsonl"));
    io::save_log(log, artifact(c, "log.jsonl"));
    append_manifest(c, "simulate", {"catalog.jsonl", "log.jsonl"});
    std::cout << "simulate: " << catalog.items.size() << " items, " << log.size()
              << " logged transitions -> " << c.out_dir << "\n";
}

void cmd_fit_world_model(const CommonArgs& args) {
    config::RunConfig c = load_config(args);
    require_artifact(c, "catalog.jsonl", "simulate");
    require_artifact(c, "log.jsonl", "simulate");
    env::Catalog catalog = io::load_catalog(artifact(c, "catalog.jsonl"));
    auto log = io::load_log(artifact(c, "log.jsonl"));

    env::WorldModelConfig wmc;
    wmc.hidden = c.env.world_model_hidden;
    wmc.learning_rate = c.env.world_model_lr;
    wmc.epochs = c.env.world_model_epochs;
    wmc.batch_size = c.env.world_model_batch;
    wmc.seed = derive_seed(c.seed, "world_model");
    env::SimParams params = config::make_sim_params(c);
    env::WorldModel model = env::fit_world_model(log, catalog, params.tracker, wmc);

    write_effective_config(c);
    io::save_world_model(model, c.out_dir);
    append_manifest(c, "fit-world-model", {"world_model.net", "world_model.json"});
    std::cout << "fit-world-model: training MSE " << model.final_mse << " after "
              << model.epochs << " epochs -> " << c.out_dir << "\n";
}

void cmd_collect_demos(const CommonArgs& args) {
    config::RunConfig c = load_config(args);
    require_artifact(c, "catalog.jsonl", "simulate");
    require_artifact(c, "world_model.net", "fit-world-model");
    env::Catalog catalog = io::load_catalog(artifact(c, "catalog.jsonl"));
    env::WorldModel model = io::load_world_model(c.out_dir);
    env::TerminationRule rule = config::make_rule(c);

    expert::ExpertModules modules = expert::make_scripted_expert(
        config::make_provider_config(c, derive_seed(c.seed, "expert")),
        c.expert.tau_planner, c.expert.tau_actor, c.expert.tau_critic,
        static_cast<std::size_t>(c.expert.memory_capacity));
    modules.provider = make_provider(c, derive_seed(c.seed, "expert"));

    expert::CollectConfig cc;
    cc.n_users = c.expert.n_demo_users;
    cc.gamma_discount = c.weighting.gamma_discount;
    cc.seed = derive_seed(c.seed, "demos");
    expert::DemoSet demos =
        expert::collect_demonstrations(model, catalog, modules, rule, cc);

    write_effective_config(c);
    io::save_demos(demos, artifact(c, "demos.jsonl"));
    append_manifest(c, "collect-demos", {"demos.jsonl"});
    std::cout << "collect-demos: " << demos.trajectories.size() << " episodes, "
              << demos.transition_count() << " transitions -> " << c.out_dir << "\n";
}

void cmd_train(const CommonArgs& args) {
    config::RunConfig c = load_config(args);
    require_artifact(c, "catalog.jsonl", "simulate");
    require_artifact(c, "world_model.net", "fit-world-model");
    require_artifact(c, "demos.jsonl", "collect-demos");
    env::Catalog catalog = io::load_catalog(artifact(c, "catalog.jsonl"));
    env::WorldModel model = io::load_world_model(c.out_dir);
    expert::DemoSet demos = io::load_demos(artifact(c, "demos.jsonl"));
    env::TerminationRule rule = config::make_rule(c);

    weighting::WeightConfig wc = config::make_weight_config(c);
    policy::TrainConfig tc = config::make_train_config(c, derive_seed(c.seed, "train"));
    policy::TrainResult result = policy::train(model, catalog, demos, wc, tc, rule);

    write_effective_config(c);
    io::save_net(result.bundle.actor, artifact(c, "actor.net"));
    io::save_net(result.bundle.q, artifact(c, "q.net"));
    io::save_net(result.bundle.v, artifact(c, "v.net"));
    io::save_net(result.bundle.disc.net, artifact(c, "disc.net"));
    io::save_weights(result.weights, artifact(c, "weights.jsonl"));
    io::save_training_metrics(result.metrics, artifact(c, "metrics.jsonl"));
    append_manifest(c, "train",
                    {"actor.net", "q.net", "v.net", "disc.net", "weights.jsonl",
                     "metrics.jsonl"});
    double last_reward =
        result.metrics.empty() ? 0.0 : result.metrics.back().mean_rollout_reward;
    std::cout << "train: " << result.metrics.size()
              << " rounds, last rollout reward " << last_reward << " -> " << c.out_dir
              << "\n";
}

void cmd_evaluate(const CommonArgs& args) {
    config::RunConfig c = load_config(args);
    require_artifact(c, "catalog.jsonl", "simulate");
    require_artifact(c, "actor.net", "train");
    env::Catalog catalog = io::load_catalog(artifact(c, "catalog.jsonl"));
    neural::Net actor = io::load_net(artifact(c, "actor.net"));

    evalbench::EvalProtocol protocol;
    protocol.rule = config::make_rule(c);
    protocol.n_episodes = c.evalbench.n_episodes;
    protocol.greedy = c.evalbench.greedy;
    protocol.seed = derive_seed(c.seed, "eval");
    env::SimParams params = config::make_sim_params(c);
    env::Policy pol = c.evalbench.greedy ? policy::make_greedy_policy(actor)
                                         : policy::make_sampling_policy(actor);
    evalbench::Metrics m = evalbench::evaluate(pol, catalog, params, protocol);

    json out = io::metrics_to_json(m);
    std::ofstream f(artifact(c, "eval.json"));
    if (!f) throw DataError("cannot write eval.json in " + c.out_dir);
    f << out.dump(2) << '\n';
    append_manifest(c, "evaluate", {"eval.json"});
    std::cout << "evaluate: Len " << m.len_mean << " +- " << m.len_std << ", R_each "
              << m.r_each_mean << " +- " << m.r_each_std << ", R_traj "
              << m.r_traj_mean << " +- " << m.r_traj_std << "\n";
}

void cmd_ablate(const CommonArgs& args, const std::vector<std::string>& variant_names) {
    config::RunConfig c = load_config(args);
    require_artifact(c, "catalog.jsonl", "simulate");
    require_artifact(c, "world_model.net", "fit-world-model");
    require_artifact(c, "demos.jsonl", "collect-demos");
    env::Catalog catalog = io::load_catalog(artifact(c, "catalog.jsonl"));
    env::WorldModel model = io::load_world_model(c.out_dir);
    expert::DemoSet demos = io::load_demos(artifact(c, "demos.jsonl"));

    std::vector<evalbench::AblationVariant> variants;
    auto parse_variant = [](const std::string& name) {
        if (name == "full") return evalbench::AblationVariant::kFull;
        if (name == "no_w") return evalbench::AblationVariant::kNoW;
        if (name == "no_w_env") return evalbench::AblationVariant::kNoWEnv;
        if (name == "no_w_irl") return evalbench::AblationVariant::kNoWIrl;
        if (name == "no_irl_baseline") return evalbench::AblationVariant::kNoIrlBaseline;
        throw ConfigError("unknown ablation variant: " + name);
    };
    if (variant_names.empty()) {
        variants = {evalbench::AblationVariant::kFull, evalbench::AblationVariant::kNoW,
                    evalbench::AblationVariant::kNoWEnv,
                    evalbench::AblationVariant::kNoWIrl,
                    evalbench::AblationVariant::kNoIrlBaseline};
    } else {
        for (const auto& n : variant_names) variants.push_back(parse_variant(n));
    }

    env::SimParams params = config::make_sim_params(c);
    evalbench::EvalProtocol protocol;
    protocol.rule = config::make_rule(c);
    protocol.n_episodes = c.evalbench.n_episodes;
    protocol.greedy = c.evalbench.greedy;
    bool alpha_explicit = c.is_explicit("weighting.alpha");

    std::vector<std::vector<std::string>> rows;
    json summary = json::array();
    for (auto variant : variants) {
        for (int s = 0; s < c.evalbench.n_seeds; ++s) {
            weighting::WeightConfig wc = config::make_weight_config(c);
            policy::TrainConfig tc =
                config::make_train_config(c, derive_seed(c.seed, 9000 + s));
            protocol.seed = derive_seed(c.seed, "eval" + std::to_string(s));
            evalbench::RunOutcome out =
                evalbench::run_variant(variant, model, catalog, demos, wc, tc, params,
                                       protocol, alpha_explicit);
            rows.push_back({out.variant, std::to_string(s),
                            std::to_string(out.metrics.len_mean),
                            std::to_string(out.metrics.r_each_mean),
                            std::to_string(out.metrics.r_traj_mean)});
            summary.push_back(json{{"variant", out.variant},
                                   {"seed_index", s},
                                   {"len_mean", out.metrics.len_mean},
                                   {"r_each_mean", out.metrics.r_each_mean},
                                   {"r_traj_mean", out.metrics.r_traj_mean}});
            std::cout << "ablate[" << out.variant << ", seed " << s << "]: R_traj "
                      << out.metrics.r_traj_mean << "\n";
        }
    }
    write_effective_config(c);
    io::write_csv(artifact(c, "ablation.csv"),
                  {"variant", "seed_index", "len_mean", "r_each_mean", "r_traj_mean"},
                  rows);
    std::ofstream f(artifact(c, "ablation.json"));
    f << summary.dump(2) << '\n';
    append_manifest(c, "ablate", {"ablation.csv", "ablation.json"});
}

void cmd_sweep(const CommonArgs& args, const std::string& param_name, Vec grid) {
    config::RunConfig c = load_config(args);
    require_artifact(c, "catalog.jsonl", "simulate");
    require_artifact(c, "world_model.net", "fit-world-model");
    require_artifact(c, "demos.jsonl", "collect-demos");
    env::Catalog catalog = io::load_catalog(artifact(c, "catalog.jsonl"));
    env::WorldModel model = io::load_world_model(c.out_dir);
    expert::DemoSet demos = io::load_demos(artifact(c, "demos.jsonl"));

    evalbench::SweepParam param;
    if (param_name == "beta") {
        param = evalbench::SweepParam::kBeta;
        if (grid.empty()) grid = {0.1, 1.0, 10.0};
    } else if (param_name == "alpha") {
        param = evalbench::SweepParam::kAlpha;
        if (grid.empty()) grid = {0.25, 0.5, 0.75};
    } else if (param_name == "alpha_ent") {
        param = evalbench::SweepParam::kAlphaEnt;
        if (grid.empty()) grid = {0.01, 0.1, 0.2};
    } else if (param_name == "lambda_imit") {
        param = evalbench::SweepParam::kLambdaImit;
        if (grid.empty()) grid = {0.1, 0.5, 2.0};
    } else {
        throw ConfigError("unknown sweep parameter: " + param_name +
                          " (expected beta|alpha|alpha_ent|lambda_imit)");
    }

    env::SimParams params = config::make_sim_params(c);
    evalbench::EvalProtocol protocol;
    protocol.rule = config::make_rule(c);
    protocol.n_episodes = c.evalbench.n_episodes;
    protocol.greedy = c.evalbench.greedy;
    protocol.seed = derive_seed(c.seed, "sweep_eval");
    weighting::WeightConfig wc = config::make_weight_config(c);
    policy::TrainConfig tc = config::make_train_config(c, derive_seed(c.seed, "sweep"));

    auto points = evalbench::sweep(param, grid, model, catalog, demos, wc, tc, params,
                                   protocol);
    std::vector<std::vector<std::string>> rows;
    for (const auto& p : points) {
        rows.push_back({std::to_string(p.value), std::to_string(p.metrics.len_mean),
                        std::to_string(p.metrics.r_each_mean),
                        std::to_string(p.metrics.r_traj_mean)});
        std::cout << "sweep " << param_name << "=" << p.value << ": R_traj "
                  << p.metrics.r_traj_mean << "\n";
    }
    write_effective_config(c);
    std::string name = "sweep_" + param_name + ".csv";
    io::write_csv(artifact(c, name),
                  {param_name, "len_mean", "r_each_mean", "r_traj_mean"}, rows);
    append_manifest(c, "sweep", {name});
}

void cmd_report(const CommonArgs& args) {
    config::RunConfig c = load_config(args);
    if (!fs::exists(c.out_dir))
        throw DataError("run directory " + c.out_dir + " does not exist");
    std::cout << "run directory: " << c.out_dir << "\n";

    std::string manifest_path = artifact(c, "manifest.json");
    if (fs::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        json manifest = json::parse(in);
        std::cout << "config hash: " << manifest.value("config_hash", "?") << "\n";
        if (manifest.contains("stages"))
            for (auto& [stage, info] : manifest["stages"].items())
                std::cout << "stage " << stage << ": "
                          << info.value("outputs", json::array()).dump() << "\n";
    }
    std::string wm_path = artifact(c, "world_model.json");
    if (fs::exists(wm_path)) {
        std::ifstream in(wm_path);
        json wm = json::parse(in);
        std::cout << "world model MSE: " << wm.value("final_mse", 0.0) << "\n";
    }
    std::string metrics_path = artifact(c, "metrics.jsonl");
    if (fs::exists(metrics_path)) {
        auto lines = io::read_lines(metrics_path);
        if (lines.size() > 1) {
            const json& last = lines.back();
            std::cout << "training rounds: " << lines.size() - 1
                      << ", last rollout reward "
                      << last.value("mean_rollout_reward", 0.0) << ", last loss "
                      << last.value("total_loss", 0.0) << "\n";
        }
    }
    std::string eval_path = artifact(c, "eval.json");
    if (fs::exists(eval_path)) {
        std::ifstream in(eval_path);
        json ev = json::parse(in);
        std::cout << "eval: Len " << ev.value("len_mean", 0.0) << " +- "
                  << ev.value("len_std", 0.0) << ", R_each "
                  << ev.value("r_each_mean", 0.0) << " +- "
                  << ev.value("r_each_std", 0.0) << ", R_traj "
                  << ev.value("r_traj_mean", 0.0) << " +- "
                  << ev.value("r_traj_std", 0.0) << "\n";
    }
    std::string ab_path = artifact(c, "ablation.json");
    if (fs::exists(ab_path)) {
        std::ifstream in(ab_path);
        json ab = json::parse(in);
        // mean R_traj per variant
        std::map<std::string, std::pair<double, int>> agg;
        for (const auto& row : ab) {
            auto& slot = agg[row.value("variant", "?")];
            slot.first += row.value("r_traj_mean", 0.0);
            slot.second += 1;
        }
        for (const auto& [variant, sum_n] : agg)
            std::cout << "ablation " << variant << ": mean R_traj "
                      << sum_n.first / sum_n.second << " over " << sum_n.second
                      << " seeds\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"offline RL + imitation pipeline for recommendation"};
    app.require_subcommand(1);

    CommonArgs sim_args, wm_args, demo_args, train_args, eval_args, ablate_args,
        sweep_args, report_args;
    std::vector<std::string> ablate_variants;
    std::string sweep_param;
    Vec sweep_grid;

    add_common(app.add_subcommand("simulate",
                                  "build the catalog and the offline interaction log"),
               sim_args);
    add_common(app.add_subcommand("fit-world-model",
                                  "fit the reward model on the offline log"),
               wm_args);
    add_common(app.add_subcommand("collect-demos",
                                  "collect expert demonstrations in the world model"),
               demo_args);
    add_common(app.add_subcommand("train", "train the policy with weighted imitation"),
               train_args);
    add_common(app.add_subcommand("evaluate",
                                  "evaluate the trained policy on fresh users"),
               eval_args);
    CLI::App* ablate =
        app.add_subcommand("ablate", "run the ablation variants with paired seeds");
    add_common(ablate, ablate_args);
    ablate->add_option("--variant", ablate_variants,
                       "variants to run (default: all five)");
    CLI::App* sweep = app.add_subcommand("sweep", "grid sweep over one hyperparameter");
    add_common(sweep, sweep_args);
    sweep->add_option("--param", sweep_param, "beta|alpha|alpha_ent|lambda_imit")
        ->required();
    sweep->add_option("--grid", sweep_grid, "grid values (default: built-in grid)");
    add_common(app.add_subcommand("report", "summarize the artifacts of a run"),
               report_args);

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            return app.exit(e) == 0 ? 0 : 1;
        }
        if (app.got_subcommand("simulate")) cmd_simulate(sim_args);
        if (app.got_subcommand("fit-world-model")) cmd_fit_world_model(wm_args);
        if (app.got_subcommand("collect-demos")) cmd_collect_demos(demo_args);
        if (app.got_subcommand("train")) cmd_train(train_args);
        if (app.got_subcommand("evaluate")) cmd_evaluate(eval_args);
        if (app.got_subcommand("ablate")) cmd_ablate(ablate_args, ablate_variants);
        if (app.got_subcommand("sweep")) cmd_sweep(sweep_args, sweep_param, sweep_grid);
        if (app.got_subcommand("report")) cmd_report(report_args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const ProviderError& e) {
        std::cerr << "provider error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}

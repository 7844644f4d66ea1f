#pragma once

// Artifact serialization: versioned line-delimited JSON for catalogs, logs
// and demonstration sets; bit-exact text checkpoints for network parameters;
// metrics logs, manifests, CSV tables, and the optional columnar ingestion
// format for real interaction logs.

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ilrec/common.hpp"
#include "ilrec/env.hpp"
#include "ilrec/evalbench.hpp"
#include "ilrec/expert.hpp"
#include "ilrec/neural.hpp"
#include "ilrec/policy.hpp"
#include "ilrec/weighting.hpp"

namespace ilrec::io {

using nlohmann::json;

inline void write_lines(const std::string& path, const std::vector<json>& lines) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& l : lines) out << l.dump() << '\n';
}

inline std::vector<json> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::vector<json> lines;
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            lines.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw DataError(path + ":" + std::to_string(ln) + ": " + e.what());
        }
    }
    return lines;
}

inline void expect_header(const std::vector<json>& lines, const std::string& format) {
    if (lines.empty() || !lines[0].contains("format") ||
        lines[0].at("format") != format)
        throw DataError("missing or wrong header; expected format '" + format + "'");
}

// ---- catalog ----

inline void save_catalog(const env::Catalog& catalog, const std::string& path) {
    std::vector<json> lines;
    lines.push_back(json{{"format", "ilrec-catalog"},
                         {"version", 1},
                         {"n_categories", catalog.n_categories},
                         {"d_item", catalog.d_item},
                         {"d_side", catalog.d_side},
                         {"seed", catalog.seed},
                         {"side_projection", catalog.side_projection}});
    for (const auto& i : catalog.items)
        lines.push_back(json{{"kind", "item"},
                             {"id", i.id},
                             {"category", i.category},
                             {"embedding", i.embedding}});
    for (const auto& u : catalog.users)
        lines.push_back(json{{"kind", "user"},
                             {"id", u.id},
                             {"preference", u.preference},
                             {"side_features", u.side_features}});
    write_lines(path, lines);
}

inline env::Catalog load_catalog(const std::string& path) {
    auto lines = read_lines(path);
    expect_header(lines, "ilrec-catalog");
    env::Catalog c;
    const json& h = lines[0];
    c.n_categories = h.at("n_categories").get<int>();
    c.d_item = h.at("d_item").get<int>();
    c.d_side = h.at("d_side").get<int>();
    c.seed = h.at("seed").get<std::uint64_t>();
    c.side_projection = h.at("side_projection").get<Vec>();
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const json& l = lines[i];
        if (l.at("kind") == "item") {
            env::Item item;
            item.id = l.at("id").get<int>();
            item.category = l.at("category").get<int>();
            item.embedding = l.at("embedding").get<Vec>();
            c.items.push_back(std::move(item));
        } else {
            env::UserProfile u;
            u.id = l.at("id").get<int>();
            u.preference = l.at("preference").get<Vec>();
            u.side_features = l.at("side_features").get<Vec>();
            c.users.push_back(std::move(u));
        }
    }
    return c;
}

// ---- states and transitions ----

inline json state_to_json(const env::StateVector& s) {
    return json{{"encoding", s.encoding},
                {"history", s.history},
                {"category_window", s.category_window},
                {"step_index", s.step_index},
                {"terminal", s.terminal}};
}

inline env::StateVector state_from_json(const json& j) {
    env::StateVector s;
    s.encoding = j.at("encoding").get<Vec>();
    s.history = j.at("history").get<std::vector<int>>();
    s.category_window = j.at("category_window").get<std::vector<int>>();
    s.step_index = j.at("step_index").get<int>();
    s.terminal = j.at("terminal").get<bool>();
    return s;
}

inline json transition_to_json(const env::Transition& t) {
    return json{{"state", state_to_json(t.state)},
                {"action", t.action},
                {"reward", t.reward},
                {"next_state", state_to_json(t.next_state)},
                {"done", t.done}};
}

inline env::Transition transition_from_json(const json& j) {
    env::Transition t;
    t.state = state_from_json(j.at("state"));
    t.action = j.at("action").get<int>();
    t.reward = j.at("reward").get<double>();
    t.next_state = state_from_json(j.at("next_state"));
    t.done = j.at("done").get<bool>();
    return t;
}

inline void save_log(const std::vector<env::Transition>& log, const std::string& path) {
    std::vector<json> lines;
    lines.push_back(json{{"format", "ilrec-log"}, {"version", 1}, {"count", log.size()}});
    for (const auto& t : log) lines.push_back(transition_to_json(t));
    write_lines(path, lines);
}

inline std::vector<env::Transition> load_log(const std::string& path) {
    auto lines = read_lines(path);
    expect_header(lines, "ilrec-log");
    std::vector<env::Transition> log;
    for (std::size_t i = 1; i < lines.size(); ++i)
        log.push_back(transition_from_json(lines[i]));
    return log;
}

// ---- demonstrations ----

inline void save_demos(const expert::DemoSet& demos, const std::string& path) {
    std::vector<json> lines;
    lines.push_back(json{{"format", "ilrec-demos"},
                         {"version", 1},
                         {"n_trajectories", demos.trajectories.size()}});
    for (std::size_t k = 0; k < demos.trajectories.size(); ++k) {
        const auto& traj = demos.trajectories[k];
        lines.push_back(json{{"kind", "trajectory"},
                             {"user_id", traj.user.id},
                             {"preference", traj.user.preference},
                             {"side_features", traj.user.side_features},
                             {"terminated_by",
                              traj.terminated_by == env::TerminationCause::kDiversityRule
                                  ? "diversity_rule"
                                  : "length_cap"},
                             {"length", traj.transitions.size()}});
        for (std::size_t t = 0; t < traj.transitions.size(); ++t) {
            json line = transition_to_json(traj.transitions[t]);
            line["kind"] = "transition";
            line["embedding"] = demos.embeddings[k][t];
            line["expert_advantage"] = demos.expert_advantages[k][t];
            lines.push_back(std::move(line));
        }
    }
    write_lines(path, lines);
}

inline expert::DemoSet load_demos(const std::string& path) {
    auto lines = read_lines(path);
    expect_header(lines, "ilrec-demos");
    expert::DemoSet demos;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const json& l = lines[i];
        if (l.at("kind") == "trajectory") {
            env::Trajectory traj;
            traj.user.id = l.at("user_id").get<int>();
            traj.user.preference = l.at("preference").get<Vec>();
            traj.user.side_features = l.at("side_features").get<Vec>();
            traj.terminated_by = l.at("terminated_by") == "diversity_rule"
                                     ? env::TerminationCause::kDiversityRule
                                     : env::TerminationCause::kLengthCap;
            demos.trajectories.push_back(std::move(traj));
            demos.embeddings.emplace_back();
            demos.expert_advantages.emplace_back();
        } else {
            demos.trajectories.back().transitions.push_back(transition_from_json(l));
            demos.embeddings.back().push_back(l.at("embedding").get<Vec>());
            demos.expert_advantages.back().push_back(
                l.at("expert_advantage").get<double>());
        }
    }
    return demos;
}

// Weight table exported alongside the demos for audit.
inline void save_weights(const weighting::WeightedDemoSet& w, const std::string& path) {
    std::vector<json> lines;
    lines.push_back(
        json{{"format", "ilrec-weights"}, {"version", 1}, {"count", w.weight.size()}});
    for (std::size_t i = 0; i < w.weight.size(); ++i)
        lines.push_back(json{{"trajectory", w.index[i].first},
                             {"step", w.index[i].second},
                             {"advantage", w.advantage[i]},
                             {"w_env", w.w_env[i]},
                             {"w_irl", w.w_irl[i]},
                             {"fused", w.fused[i]},
                             {"weight", w.weight[i]}});
    write_lines(path, lines);
}

// ---- checkpoints ----
// Text tensor dump with a shape manifest; parameters are stored as the hex
// bit pattern of the double for bit-exact round trips.

inline std::string double_to_hex(double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(bits));
    return buf;
}

inline double double_from_hex(const std::string& hex) {
    std::uint64_t bits = 0;
    if (std::sscanf(hex.c_str(), "%llx",
                    reinterpret_cast<unsigned long long*>(&bits)) != 1)
        throw DataError("bad parameter encoding in checkpoint: " + hex);
    double x;
    std::memcpy(&x, &bits, sizeof x);
    return x;
}

inline void save_net(const neural::Net& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "ilrec-net 1\n";
    out << "dims";
    for (int d : net.layer_dims) out << ' ' << d;
    out << '\n';
    out << "activation " << static_cast<int>(net.activation) << '\n';
    out << "head " << static_cast<int>(net.head) << '\n';
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        out << "layer " << l << '\n';
        for (double x : net.weights[l]) out << double_to_hex(x) << '\n';
        for (double x : net.biases[l]) out << double_to_hex(x) << '\n';
    }
}

inline neural::Net load_net(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "ilrec-net" || version != 1)
        throw DataError("bad checkpoint header in " + path);
    std::string tok;
    in >> tok;  // "dims"
    std::string rest;
    std::getline(in, rest);
    std::istringstream dims_in(rest);
    std::vector<int> dims;
    int d;
    while (dims_in >> d) dims.push_back(d);
    int act = 0, head = 0;
    in >> tok >> act >> tok >> head;
    neural::Net net = neural::make_zero_net(dims, static_cast<neural::Activation>(act),
                                            static_cast<neural::OutputHead>(head));
    std::string hex;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        std::size_t li;
        in >> tok >> li;
        for (double& x : net.weights[l])
            if (in >> hex) x = double_from_hex(hex);
        for (double& x : net.biases[l])
            if (in >> hex) x = double_from_hex(hex);
    }
    if (!in) throw DataError("truncated checkpoint " + path);
    return net;
}

inline void save_world_model(const env::WorldModel& model, const std::string& dir) {
    save_net(model.reward_net, dir + "/world_model.net");
    std::ofstream out(dir + "/world_model.json");
    out << json{{"format", "ilrec-world-model"},
                {"version", 1},
                {"tracker_k", model.tracker.k},
                {"tracker_decay", model.tracker.decay},
                {"final_mse", model.final_mse},
                {"epochs", model.epochs}}
               .dump(2);
}

inline env::WorldModel load_world_model(const std::string& dir) {
    env::WorldModel model;
    model.reward_net = load_net(dir + "/world_model.net");
    std::ifstream in(dir + "/world_model.json");
    if (!in) throw DataError("cannot read " + dir + "/world_model.json");
    json j = json::parse(in);
    model.tracker.k = j.at("tracker_k").get<int>();
    model.tracker.decay = j.at("tracker_decay").get<double>();
    model.final_mse = j.at("final_mse").get<double>();
    model.epochs = j.at("epochs").get<int>();
    return model;
}

// ---- metrics / tables ----

inline json metrics_to_json(const evalbench::Metrics& m) {
    json rows = json::array();
    for (const auto& e : m.episodes)
        rows.push_back(json{{"len", e.length},
                            {"reward_sum", e.reward_sum},
                            {"reward_mean", e.reward_mean}});
    return json{{"len_mean", m.len_mean},     {"len_std", m.len_std},
                {"r_each_mean", m.r_each_mean}, {"r_each_std", m.r_each_std},
                {"r_traj_mean", m.r_traj_mean}, {"r_traj_std", m.r_traj_std},
                {"episodes", rows}};
}

inline void save_training_metrics(const std::vector<policy::MetricsRow>& rows,
                                  const std::string& path) {
    std::vector<json> lines;
    lines.push_back(json{{"format", "ilrec-metrics"}, {"version", 1}});
    for (const auto& r : rows)
        lines.push_back(json{{"round", r.round},
                             {"td_loss", r.td_loss},
                             {"imit_loss", r.imit_loss},
                             {"rl_loss", r.rl_loss},
                             {"total_loss", r.total_loss},
                             {"mean_d_demo", r.mean_d_demo},
                             {"mean_d_policy", r.mean_d_policy},
                             {"mean_rollout_reward", r.mean_rollout_reward},
                             {"mean_rollout_length", r.mean_rollout_length}});
    write_lines(path, lines);
}

inline void write_csv(const std::string& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    for (std::size_t i = 0; i < header.size(); ++i)
        out << header[i] << (i + 1 < header.size() ? "," : "\n");
    for (const auto& row : rows)
        for (std::size_t i = 0; i < row.size(); ++i)
            out << row[i] << (i + 1 < row.size() ? "," : "\n");
}

// ---- ingestion ----
// Columnar text format for plugging real logs in place of the synthetic
// simulator: tab-separated user_id, item_id, rating, timestamp, category,
// title; lines starting with '#' are comments.

struct IngestedRow {
    int user_id = 0;
    int item_id = 0;
    double rating = 0.0;
    long timestamp = 0;
    int category = 0;
    std::string title;
};

inline std::vector<IngestedRow> read_ingestion_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::vector<IngestedRow> rows;
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        IngestedRow r;
        if (!(is >> r.user_id >> r.item_id >> r.rating >> r.timestamp >> r.category))
            throw DataError(path + ":" + std::to_string(ln) + ": malformed row");
        std::getline(is, r.title);
        if (!r.title.empty() && r.title[0] == '\t') r.title.erase(0, 1);
        if (r.rating < 1.0 || r.rating > 5.0)
            throw DataError(path + ":" + std::to_string(ln) + ": rating out of [1,5]");
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---- manifest ----

inline void write_manifest(const std::string& path, const json& manifest) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << manifest.dump(2) << '\n';
}

}  // namespace ilrec::io

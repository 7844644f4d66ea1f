#include <doctest.h>

#include <atomic>
#include <thread>

#include "ilrec/provider_http.hpp"

using namespace ilrec;
using namespace ilrec::expert;
using nlohmann::json;

namespace {

// In-process completion server. The handler inspects the prompt text and
// returns the matching role payload wrapped in a {"completion": "..."} body.
struct TestServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> requests{0};
    std::string last_auth;

    explicit TestServer(bool fail_first = false) {
        server.Post("/complete", [this, fail_first](const httplib::Request& req,
                                                    httplib::Response& res) {
            int n = ++requests;
            if (auto it = req.headers.find("Authorization"); it != req.headers.end())
                last_auth = it->second;
            if (fail_first && n == 1) {
                res.status = 500;
                return;
            }
            json body = json::parse(req.body);
            std::string prompt = body.at("prompt").get<std::string>();
            json payload;
            if (prompt.find("Reflect") == 0)
                payload = {{"overused_category", 2}, {"top_categories", {1, 0}}};
            else if (prompt.find("Plan") == 0)
                payload = {{"preferred_categories", {3, 1}}};
            else if (prompt.find("Produce") == 0)
                payload = {{"indicator", {1.0, 0.0, 0.0, 0.0, 0.0, 0.0}}};
            else
                payload = {{"value", 12.5}};
            res.set_content(json{{"completion", payload.dump()}}.dump(),
                            "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~TestServer() {
        server.stop();
        thread.join();
    }
    std::string endpoint() const {
        return "http://127.0.0.1:" + std::to_string(port) + "/complete";
    }
};

ExternalProviderConfig make_config(const TestServer& srv) {
    ExternalProviderConfig c;
    c.endpoint = srv.endpoint();
    c.timeout_seconds = 5;
    c.retries = 2;
    return c;
}

}  // namespace

TEST_CASE("external provider round trips all four roles") {
    TestServer srv;
    ExternalProviderConfig config = make_config(srv);
    config.auth_token = "secret-token";
    ExternalProvider provider(config);

    env::Catalog cat = env::build_synthetic_catalog(83, 12, 4, 6, 4);
    env::SimParams params;
    env::TerminationRule rule{5, 2, 20};

    env::Policy first_item = [](const env::StateVector&, const env::UserProfile&,
                                Rng&) { return 0; };
    env::Trajectory traj =
        env::run_sim_episode(cat, cat.users[0], first_item, params, rule, 1);

    Reflection r = provider.reflect(traj, 3, cat, rule);
    CHECK(r.overused_category == 2);
    CHECK(r.top_categories == std::vector<int>{1, 0});
    CHECK(r.episode_id == 3);

    env::StateVector s = env::encode_state({}, cat.users[0], cat, params.tracker);
    Guidance g = provider.plan(s, cat.users[0], {}, cat, rule);
    CHECK(g.preferred_categories == std::vector<int>{3, 1});

    Vec ind = provider.act(s, g, cat.users[0], {}, cat);
    REQUIRE(ind.size() == 6);
    CHECK(ind[0] == 1.0);

    CHECK(provider.critic_value(s, {}) == 12.5);
    CHECK(srv.last_auth == "Bearer secret-token");
}

TEST_CASE("external provider retries transient failures") {
    TestServer srv(/*fail_first=*/true);
    ExternalProvider provider(make_config(srv));
    env::StateVector s;
    s.step_index = 1;
    CHECK(provider.critic_value(s, {}) == 12.5);
    CHECK(srv.requests.load() >= 2);
}

TEST_CASE("external provider surfaces hard failures as ProviderError") {
    SUBCASE("unreachable endpoint") {
        ExternalProviderConfig config;
        config.endpoint = "http://127.0.0.1:1/complete";  // nothing listens here
        config.timeout_seconds = 1;
        config.retries = 1;
        ExternalProvider provider(config);
        env::StateVector s;
        CHECK_THROWS_AS(provider.critic_value(s, {}), ProviderError);
    }
    SUBCASE("non-JSON completion") {
        httplib::Server server;
        server.Post("/complete", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(json{{"completion", "sure, here you go"}}.dump(),
                            "application/json");
        });
        int port = server.bind_to_any_port("127.0.0.1");
        std::thread t([&] { server.listen_after_bind(); });
        server.wait_until_ready();
        ExternalProviderConfig config;
        config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/complete";
        config.timeout_seconds = 5;
        ExternalProvider provider(config);
        env::StateVector s;
        CHECK_THROWS_AS(provider.critic_value(s, {}), ProviderError);
        server.stop();
        t.join();
    }
    SUBCASE("missing endpoint is a configuration error") {
        CHECK_THROWS_AS(ExternalProvider(ExternalProviderConfig{}), ConfigError);
    }
}

TEST_CASE("environment variables override endpoint and token") {
    ExternalProviderConfig base;
    base.endpoint = "http://configured/complete";
    setenv("ILREC_PROVIDER_ENDPOINT", "http://from-env/complete", 1);
    setenv("ILREC_PROVIDER_TOKEN", "env-token", 1);
    ExternalProviderConfig resolved = external_config_from_env(base);
    CHECK(resolved.endpoint == "http://from-env/complete");
    CHECK(resolved.auth_token == "env-token");
    unsetenv("ILREC_PROVIDER_ENDPOINT");
    unsetenv("ILREC_PROVIDER_TOKEN");
}

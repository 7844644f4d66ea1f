#pragma once

// External text-policy provider: single request/response with a text prompt
// field and a text completion field. The completion is expected to carry the
// structured payload as JSON. Endpoint and auth token come from configuration
// or environment, never from code.

#include <cstdlib>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "ilrec/common.hpp"
#include "ilrec/expert.hpp"

namespace ilrec::expert {

struct ExternalProviderConfig {
    std::string endpoint;  // e.g. http://host:port/complete
    std::string auth_token;
    double temperature = 0.5;
    int timeout_seconds = 30;
    int retries = 2;
};

inline ExternalProviderConfig external_config_from_env(ExternalProviderConfig base) {
    if (const char* e = std::getenv("ILREC_PROVIDER_ENDPOINT")) base.endpoint = e;
    if (const char* t = std::getenv("ILREC_PROVIDER_TOKEN")) base.auth_token = t;
    return base;
}

class ExternalProvider : public Provider {
public:
    explicit ExternalProvider(ExternalProviderConfig config)
        : config_(std::move(config)) {
        if (config_.endpoint.empty())
            throw ConfigError("external provider requires an endpoint");
        auto scheme_end = config_.endpoint.find("://");
        std::string rest = scheme_end == std::string::npos
                               ? config_.endpoint
                               : config_.endpoint.substr(scheme_end + 3);
        auto slash = rest.find('/');
        host_ = "http://" + (slash == std::string::npos ? rest : rest.substr(0, slash));
        path_ = slash == std::string::npos ? "/complete" : rest.substr(slash);
    }

    Reflection reflect(const env::Trajectory& episode, int episode_id,
                       const env::Catalog& catalog,
                       const env::TerminationRule& rule) override {
        if (episode.transitions.empty() || !episode.transitions.back().done)
            throw UsageError("reflect: episode is not complete");
        std::ostringstream prompt;
        prompt << "Reflect on a finished recommendation session of "
               << episode.transitions.size() << " steps. Item categories:";
        for (const auto& t : episode.transitions)
            prompt << ' ' << env::item_by_id(catalog, t.action).category;
        prompt << ". Termination: "
               << (episode.terminated_by == env::TerminationCause::kDiversityRule
                       ? "diversity rule"
                       : "length cap")
               << " (M=" << rule.max_same_category << ", N=" << rule.window << ")."
               << " Reply with JSON {\"overused_category\": int or -1,"
                  " \"top_categories\": [int...]}.";
        nlohmann::json r = complete_json(prompt.str());
        Reflection out;
        out.episode_id = episode_id;
        out.overused_category = r.value("overused_category", -1);
        out.top_categories = r.value("top_categories", std::vector<int>{});
        out.key = episode.transitions.back().next_state.encoding;
        out.text = r.dump();
        return out;
    }

    Guidance plan(const env::StateVector& state, const env::UserProfile& user,
                  const std::vector<const MemoryEntry*>& reflections,
                  const env::Catalog& catalog,
                  const env::TerminationRule& rule) override {
        std::ostringstream prompt;
        prompt << "Plan the next recommendation. " << catalog.n_categories
               << " categories; session must stay under " << rule.max_same_category
               << " same-category items per " << rule.window << " steps. User "
               << user.id << " at step " << state.step_index
               << ". Recent categories:";
        for (int c : state.category_window) prompt << ' ' << c;
        for (const MemoryEntry* m : reflections)
            prompt << "\nreflection: " << m->text;
        prompt << "\nReply with JSON {\"preferred_categories\": [int...]},"
                  " best first.";
        nlohmann::json r = complete_json(prompt.str());
        Guidance g;
        g.preferred_categories = r.value("preferred_categories", std::vector<int>{});
        if (g.preferred_categories.empty())
            throw ProviderError("plan: provider returned no categories");
        g.text = r.dump();
        return g;
    }

    Vec act(const env::StateVector& state, const Guidance& guidance,
            const env::UserProfile&, const std::vector<const MemoryEntry*>& retrieved,
            const env::Catalog& catalog) override {
        std::ostringstream prompt;
        prompt << "Produce an action indicator vector of dimension " << catalog.d_item
               << " for the guidance: " << guidance.text << ". Step "
               << state.step_index << ".";
        for (const MemoryEntry* m : retrieved) prompt << "\nmemory: " << m->text;
        prompt << "\nReply with JSON {\"indicator\": [number...]}.";
        nlohmann::json r = complete_json(prompt.str());
        Vec ind = r.value("indicator", Vec{});
        if (static_cast<int>(ind.size()) != catalog.d_item || !all_finite(ind))
            throw ProviderError("act: provider returned a bad indicator");
        return ind;
    }

    double critic_value(const env::StateVector& state,
                        const std::vector<const MemoryEntry*>& retrieved) override {
        std::ostringstream prompt;
        prompt << "Estimate the value of the current session state at step "
               << state.step_index << ".";
        for (const MemoryEntry* m : retrieved)
            prompt << "\nknown state value: " << m->value;
        prompt << "\nReply with JSON {\"value\": number}.";
        nlohmann::json r = complete_json(prompt.str());
        if (!r.contains("value") || !r.at("value").is_number())
            throw ProviderError("critic: provider returned no value");
        return r.at("value").get<double>();
    }

private:
    nlohmann::json complete_json(const std::string& prompt) {
        std::string completion = complete(prompt);
        try {
            return nlohmann::json::parse(completion);
        } catch (const nlohmann::json::parse_error&) {
            throw ProviderError("provider completion is not valid JSON");
        }
    }

    std::string complete(const std::string& prompt) {
        nlohmann::json request{{"prompt", prompt},
                               {"temperature", config_.temperature}};
        std::string last_error;
        for (int attempt = 0; attempt <= config_.retries; ++attempt) {
            httplib::Client client(host_);
            client.set_connection_timeout(config_.timeout_seconds);
            client.set_read_timeout(config_.timeout_seconds);
            httplib::Headers headers;
            if (!config_.auth_token.empty())
                headers.insert({"Authorization", "Bearer " + config_.auth_token});
            auto res = client.Post(path_, headers, request.dump(), "application/json");
            if (res && res->status == 200) {
                try {
                    nlohmann::json body = nlohmann::json::parse(res->body);
                    if (body.contains("completion"))
                        return body.at("completion").get<std::string>();
                    last_error = "response missing completion field";
                } catch (const nlohmann::json::parse_error&) {
                    last_error = "response is not valid JSON";
                }
            } else {
                last_error = res ? "HTTP " + std::to_string(res->status)
                                 : "connection failed";
            }
        }
        throw ProviderError("external provider failed after " +
                            std::to_string(config_.retries + 1) + " attempts: " +
                            last_error);
    }

    ExternalProviderConfig config_;
    std::string host_;
    std::string path_;
};

}  // namespace ilrec::expert

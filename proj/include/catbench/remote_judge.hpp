#pragma once

// HTTP adapters for the two remote providers.
//
// RemoteA speaks the Anthropic Messages API, RemoteB the OpenAI chat
// completions API. Both archive the exact request and response bodies.
// HTTPS needs CPPHTTPLIB_OPENSSL_SUPPORT at compile time.

#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "catbench/judge.hpp"
#include "catbench/runner.hpp"

namespace catbench {

constexpr std::string_view api_key_variable(Provider p) noexcept {
    switch (p) {
        case Provider::RemoteA: return "ANTHROPIC_API_KEY";
        case Provider::RemoteB: return "OPENAI_API_KEY";
        default: return "";
    }
}

constexpr std::string_view default_base_url(Provider p) noexcept {
    switch (p) {
        case Provider::RemoteA: return "https://api.anthropic.com";
        case Provider::RemoteB: return "https://api.openai.com";
        default: return "";
    }
}

constexpr bool tls_available() noexcept {
#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
    return true;
#else
    return false;
#endif
}

namespace detail {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path below the origin, no trailing slash
};

inline Endpoint split_base_url(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw JudgeError(JudgeErrorKind::BadConfig, "base_url needs a scheme: " + std::string(url));
    const auto scheme = text::ascii_lower(url.substr(0, scheme_end));
    if (scheme != "http" && scheme != "https") throw JudgeError(JudgeErrorKind::BadConfig, "unsupported scheme in base_url: " + std::string(url));
    if (scheme == "https" && !tls_available())
        throw JudgeError(JudgeErrorKind::BadConfig, "this build has no TLS support; rebuild with CATBENCH_WITH_TLS=ON or use http://");
    const auto path_at = url.find('/', scheme_end + 3);
    Endpoint e;
    e.origin = std::string(url.substr(0, path_at));
    if (path_at != std::string_view::npos) {
        e.prefix = std::string(url.substr(path_at));
        while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
    }
    if (e.origin.size() == scheme_end + 3) throw JudgeError(JudgeErrorKind::BadConfig, "base_url has no host: " + std::string(url));
    return e;
}

inline std::string excerpt(std::string_view body, std::size_t limit = 300) {
    if (body.size() <= limit) return std::string(body);
    return std::string(body.substr(0, limit)) + "...";
}

}  // namespace detail

class RemoteJudge final : public Judge {
public:
    /// An empty api_key reads the provider's environment variable.
    RemoteJudge(JudgeConfig config, std::string api_key = "") : config_(std::move(config)), api_key_(std::move(api_key)) {
        if (!is_remote(config_.provider)) throw JudgeError(JudgeErrorKind::BadConfig, "not a remote provider");
        if (config_.model_name.empty()) throw JudgeError(JudgeErrorKind::BadConfig, "remote judges need a model name");
        if (api_key_.empty()) {
            const auto var = std::string(api_key_variable(config_.provider));
            const char* value = std::getenv(var.c_str());
            if (!value || !*value) throw JudgeError(JudgeErrorKind::BadConfig, var + " is not set");
            api_key_ = value;
        }
        endpoint_ = detail::split_base_url(config_.base_url.empty() ? default_base_url(config_.provider) : std::string_view(config_.base_url));
    }

    [[nodiscard]] std::string id() const override { return std::string(provider_name(config_.provider)) + "/" + config_.model_name; }
    [[nodiscard]] bool offline() const override { return false; }

    [[nodiscard]] std::string request_body(const PromptText& prompt) const {
        nlohmann::json body{{"model", config_.model_name},
                            {"max_tokens", config_.max_tokens},
                            {"temperature", config_.temperature},
                            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt.body}}})}};
        return body.dump();
    }

    Completion complete(const JudgeRequest& request) override {
        if (!request.prompt) throw JudgeError(JudgeErrorKind::ProviderError, "remote judge called without a prompt");
        Completion c;
        c.request_body = request_body(*request.prompt);

        httplib::Client client(endpoint_.origin);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());

        httplib::Headers headers;
        std::string path = endpoint_.prefix;
        if (config_.provider == Provider::RemoteA) {
            path += "/v1/messages";
            headers.emplace("x-api-key", api_key_);
            headers.emplace("anthropic-version", "2023-06-01");
        } else {
            path += "/v1/chat/completions";
            headers.emplace("Authorization", "Bearer " + api_key_);
        }

        auto res = client.Post(path, headers, c.request_body, "application/json");
        if (!res) {
            const auto err = res.error();
            const bool timed_out = err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout;
            throw JudgeError(timed_out ? JudgeErrorKind::Timeout : JudgeErrorKind::ProviderError,
                             id() + ": " + httplib::to_string(err), true);
        }
        c.response_body = res->body;
        if (res->status != 200) {
            const bool transient = res->status == 408 || res->status == 429 || res->status >= 500;
            throw JudgeError(JudgeErrorKind::ProviderError,
                             id() + ": HTTP " + std::to_string(res->status) + ": " + detail::excerpt(res->body), transient);
        }
        c.text = extract_text(res->body);
        return c;
    }

    /// Pulls the assistant text out of a successful response body.
    [[nodiscard]] std::string extract_text(const std::string& body) const {
        try {
            const auto j = nlohmann::json::parse(body);
            std::string out;
            if (config_.provider == Provider::RemoteA) {
                for (const auto& block : j.at("content"))
                    if (block.value("type", "") == "text") out += block.at("text").get<std::string>();
            } else {
                out = j.at("choices").at(0).at("message").at("content").get<std::string>();
            }
            return out;
        } catch (const nlohmann::json::exception& e) {
            throw JudgeError(JudgeErrorKind::ProviderError, id() + ": unreadable response: " + e.what() + ": " + detail::excerpt(body), true);
        }
    }

private:
    JudgeConfig config_;
    std::string api_key_;
    detail::Endpoint endpoint_;
};

/// Offline judges plus the remote adapters; used by the CLI for --live runs.
inline std::unique_ptr<Judge> make_any_judge(const ExperimentConfig& config, const Corpus& corpus) {
    if (is_remote(config.judge.provider)) return std::make_unique<RemoteJudge>(config.judge);
    return make_offline_judge(config, corpus);
}

}  // namespace catbench

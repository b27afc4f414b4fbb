#pragma once

// Judges and the retry-until-valid loop.
//
// A Judge turns one prompt into one completion. evaluate() re-submits the
// identical prompt until the validator accepts a reply or the retry budget is
// spent. Validation failures retry immediately; transport failures back off
// exponentially with full jitter.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "catbench/corpus.hpp"
#include "catbench/error.hpp"
#include "catbench/parser.hpp"
#include "catbench/prompts.hpp"
#include "catbench/response.hpp"
#include "catbench/rng.hpp"
#include "catbench/sampler.hpp"
#include "catbench/text.hpp"

namespace catbench {

enum class Provider { RemoteA, RemoteB, Mock, Synthetic };

constexpr std::string_view provider_name(Provider p) noexcept {
    switch (p) {
        case Provider::RemoteA: return "RemoteA";
        case Provider::RemoteB: return "RemoteB";
        case Provider::Mock: return "Mock";
        case Provider::Synthetic: return "Synthetic";
    }
    return "?";
}

constexpr bool is_remote(Provider p) noexcept { return p == Provider::RemoteA || p == Provider::RemoteB; }

enum class JudgeErrorKind { ExhaustedRetries, Timeout, ProviderError, BadConfig };

class JudgeError : public KindedError<JudgeErrorKind> {
public:
    JudgeError(JudgeErrorKind kind, const std::string& what, bool retryable = false)
        : KindedError(kind, what, kind == JudgeErrorKind::BadConfig ? FailureClass::Validation : FailureClass::Provider),
          retryable_(retryable) {}

    /// Transport-level failures worth another attempt after backoff.
    [[nodiscard]] bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

struct JudgeConfig {
    Provider provider = Provider::Synthetic;
    std::string model_name = "synthetic";
    double temperature = 1.0;
    int max_retries = 5;
    std::chrono::milliseconds timeout{120'000};
    int max_concurrency = 4;
    std::string base_url;  ///< remote providers only; empty = vendor default
    int max_tokens = 4096;

    void validate() const {
        if (!(temperature >= 0.0)) throw JudgeError(JudgeErrorKind::BadConfig, "temperature must be >= 0");
        if (max_retries < 0) throw JudgeError(JudgeErrorKind::BadConfig, "max_retries must be >= 0");
        if (max_concurrency < 1) throw JudgeError(JudgeErrorKind::BadConfig, "max_concurrency must be >= 1");
    }
};

inline Provider provider_from_name(std::string_view name) {
    const auto key = text::ascii_lower(name);
    if (key == "remotea" || key == "anthropic") return Provider::RemoteA;
    if (key == "remoteb" || key == "openai") return Provider::RemoteB;
    if (key == "mock") return Provider::Mock;
    if (key == "synthetic") return Provider::Synthetic;
    throw JudgeError(JudgeErrorKind::BadConfig, "unknown provider: " + std::string(name));
}

inline void to_json(nlohmann::json& j, const JudgeConfig& c) {
    j = nlohmann::json{{"provider", provider_name(c.provider)},
                       {"model_name", c.model_name},
                       {"temperature", c.temperature},
                       {"max_retries", c.max_retries},
                       {"timeout_ms", c.timeout.count()},
                       {"max_concurrency", c.max_concurrency},
                       {"base_url", c.base_url},
                       {"max_tokens", c.max_tokens}};
}

inline void from_json(const nlohmann::json& j, JudgeConfig& c) {
    c = JudgeConfig{};
    c.provider = provider_from_name(j.value("provider", std::string("Synthetic")));
    c.model_name = j.value("model_name", c.model_name);
    c.temperature = j.value("temperature", c.temperature);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<long long>(c.timeout.count())));
    c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
    c.base_url = j.value("base_url", c.base_url);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
}

/// Hash of everything that determines a request: provider, model, temperature, prompt.
inline std::string request_fingerprint(const JudgeConfig& config, const PromptText& prompt) {
    std::uint64_t h = fnv1a64(provider_name(config.provider));
    h = fnv1a64("\x1f", h);
    h = fnv1a64(config.model_name, h);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(text::format_double(config.temperature), h);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(prompt.body, h);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------

/// What a judge is asked to do on one attempt.
struct JudgeRequest {
    const PromptText* prompt = nullptr;
    const Batch* batch = nullptr;  ///< poems behind the prompt (synthetic judges read it)
    int attempt = 1;
};

struct Completion {
    std::string text;
    std::string request_body;   ///< verbatim wire payloads, remote providers only
    std::string response_body;
};

class Judge {
public:
    virtual ~Judge() = default;
    [[nodiscard]] virtual std::string id() const = 0;
    /// Throws JudgeError on transport or provider failure.
    virtual Completion complete(const JudgeRequest& request) = 0;
    /// False when replies depend on call order (scripted mocks).
    [[nodiscard]] virtual bool order_independent() const { return true; }
    [[nodiscard]] virtual bool offline() const { return true; }
};

/// Replays a fixed list of replies in call order.
class ScriptedJudge final : public Judge {
public:
    explicit ScriptedJudge(std::vector<std::string> script, std::string name = "mock")
        : script_(script.begin(), script.end()), name_(std::move(name)) {}

    [[nodiscard]] std::string id() const override { return name_; }
    [[nodiscard]] bool order_independent() const override { return false; }

    Completion complete(const JudgeRequest&) override {
        std::lock_guard lock(mutex_);
        if (script_.empty()) throw JudgeError(JudgeErrorKind::ProviderError, "mock script exhausted");
        Completion c{std::move(script_.front()), {}, {}};
        script_.pop_front();
        ++calls_;
        return c;
    }

    [[nodiscard]] int calls() const {
        std::lock_guard lock(mutex_);
        return calls_;
    }

private:
    mutable std::mutex mutex_;
    std::deque<std::string> script_;
    std::string name_;
    int calls_ = 0;
};

/// Delegates to a callable; handy for tests and keyed mocks.
class FunctionJudge final : public Judge {
public:
    using Fn = std::function<std::string(const JudgeRequest&)>;

    explicit FunctionJudge(Fn fn, std::string name = "mock") : fn_(std::move(fn)), name_(std::move(name)) {}

    [[nodiscard]] std::string id() const override { return name_; }
    Completion complete(const JudgeRequest& request) override { return {fn_(request), {}, {}}; }

private:
    Fn fn_;
    std::string name_;
};

// ---------------------------------------------------------------------------
// Synthetic oracle

struct NoiseModel {
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

struct ScaleContext {
    int position = 1;  ///< 1-based
    int batch_size = 1;
    double latent = 0.0;
    double latent_min = 0.0;
    double latent_max = 0.0;
};

using ScalePolicy = std::function<int(const ScaleContext&)>;

/// Five equal-width bins over the batch's latent range; the top bin scores 5.
inline int latent_bins_policy(const ScaleContext& ctx) {
    const double span = ctx.latent_max - ctx.latent_min;
    if (!(span > 1e-12)) return kMaxScaleScore;
    const double frac = (ctx.latent - ctx.latent_min) / span;
    const int bin = std::clamp(static_cast<int>(std::floor(frac * 5.0)), 0, 4);
    return kMinScaleScore + bin;
}

/// Five equal position bands; position 1 scores 5.
inline int position_quintile_policy(const ScaleContext& ctx) {
    const int band = (ctx.position - 1) * 5 / std::max(ctx.batch_size, 1);
    return kMaxScaleScore - std::clamp(band, 0, 4);
}

/// Ranks a batch by latent = -category rank + N(0, sigma^2) and prints the
/// result in the ranked-list format. sigma = 0 reproduces the ground truth,
/// equal latents ordered by ascending poem id.
inline RawResponse synthetic_rank(const Batch& batch, const Corpus& corpus, const NoiseModel& noise,
                                  const ScalePolicy& scale_policy = latent_bins_policy) {
    struct Item {
        const Poem* poem;
        double latent;
    };
    auto rng = Xoshiro256::substream(noise.seed, "synthetic-rank", static_cast<std::uint64_t>(batch.batch_id));
    std::vector<Item> items;
    items.reserve(batch.poem_ids.size());
    for (const auto& id : batch.poem_ids) {
        const Poem* poem = corpus.find(id);
        if (!poem) throw JudgeError(JudgeErrorKind::ProviderError, "synthetic judge got unknown poem id " + id);
        const double jitter = noise.sigma > 0.0 ? noise.sigma * rng.gaussian() : 0.0;
        items.push_back({poem, -static_cast<double>(category_rank(poem->category)) + jitter});
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        if (a.latent != b.latent) return a.latent > b.latent;
        return a.poem->id < b.poem->id;
    });

    double lo = 0.0, hi = 0.0;
    if (!items.empty()) {
        lo = items.back().latent;
        hi = items.front().latent;
    }
    std::string out;
    int prev = kMaxScaleScore;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const ScaleContext ctx{static_cast<int>(i) + 1, static_cast<int>(items.size()), items[i].latent, lo, hi};
        // Keep the list non-increasing whatever the policy returns.
        const int score = std::min(prev, std::clamp(scale_policy(ctx), kMinScaleScore, kMaxScaleScore));
        prev = score;
        out += std::to_string(i + 1) + ". " + items[i].poem->author + " - " + items[i].poem->title + " : " +
               std::to_string(score) + "\n";
    }
    char sig[32];
    std::snprintf(sig, sizeof sig, "%g", noise.sigma);
    return RawResponse{out, 1, std::string("synthetic(sigma=") + sig + ")", {}};
}

/// Category guess from one noisy latent draw: thresholds halfway between ranks.
inline Category synthetic_classify(const Poem& poem, const NoiseModel& noise, std::uint64_t index) {
    auto rng = Xoshiro256::substream(noise.seed, "synthetic-classify", index);
    const double latent = -static_cast<double>(category_rank(poem.category)) + (noise.sigma > 0.0 ? noise.sigma * rng.gaussian() : 0.0);
    if (latent > -1.5) return Category::Good;
    if (latent > -2.5) return Category::Medium;
    return Category::Bad;
}

/// Mixes a run seed with a criterion and batch into a per-call noise seed.
inline std::uint64_t synthetic_call_seed(std::uint64_t run_seed, std::string_view criterion, int batch_id) {
    std::uint64_t h = fnv1a64(criterion, run_seed ^ 0x5bd1e995ULL);
    std::uint64_t s = h ^ static_cast<std::uint64_t>(batch_id);
    return splitmix64_next(s);
}

class SyntheticJudge final : public Judge {
public:
    SyntheticJudge(const Corpus& corpus, double sigma, std::uint64_t seed, ScalePolicy policy = latent_bins_policy)
        : corpus_(&corpus), sigma_(sigma), seed_(seed), policy_(std::move(policy)) {}

    [[nodiscard]] std::string id() const override {
        char sig[32];
        std::snprintf(sig, sizeof sig, "%g", sigma_);
        return std::string("synthetic(sigma=") + sig + ")";
    }

    Completion complete(const JudgeRequest& request) override {
        if (!request.prompt || !request.batch) throw JudgeError(JudgeErrorKind::ProviderError, "synthetic judge needs the batch");
        const NoiseModel noise{sigma_, synthetic_call_seed(seed_, request.prompt->criterion, request.batch->batch_id)};
        if (request.prompt->mode == PromptMode::Classification) {
            const Poem* poem = request.batch->poem_ids.empty() ? nullptr : corpus_->find(request.batch->poem_ids.front());
            if (!poem) throw JudgeError(JudgeErrorKind::ProviderError, "synthetic judge got an empty batch");
            const auto c = synthetic_classify(*poem, noise, static_cast<std::uint64_t>(request.batch->batch_id));
            return {"<reasoning>synthetic latent draw</reasoning>\n<category>" + std::string(category_name(c)) + "</category>\n", {}, {}};
        }
        return {synthetic_rank(*request.batch, *corpus_, noise, policy_).text, {}, {}};
    }

private:
    const Corpus* corpus_;
    double sigma_;
    std::uint64_t seed_;
    ScalePolicy policy_;
};

// ---------------------------------------------------------------------------
// Retry loop

/// One line of the raw exchange log.
struct ExchangeRecord {
    std::optional<std::string> timestamp;  ///< wall clock for remote judges only
    std::string request_key;
    std::string fingerprint;
    std::string judge_id;
    int attempt = 1;
    std::string status;  ///< "ok", "invalid", "transport_error"
    std::string reason;
    std::string text;
    std::string request_body;
    std::string response_body;
};

inline void to_json(nlohmann::json& j, const ExchangeRecord& r) {
    j = nlohmann::json{{"timestamp", r.timestamp ? nlohmann::json(*r.timestamp) : nlohmann::json(nullptr)},
                       {"request_key", r.request_key},
                       {"fingerprint", r.fingerprint},
                       {"judge_id", r.judge_id},
                       {"attempt", r.attempt},
                       {"status", r.status},
                       {"reason", r.reason},
                       {"text", r.text}};
    if (!r.request_body.empty()) j["request_body"] = r.request_body;
    if (!r.response_body.empty()) j["response_body"] = r.response_body;
}

inline void from_json(const nlohmann::json& j, ExchangeRecord& r) {
    r = ExchangeRecord{};
    if (j.contains("timestamp") && !j.at("timestamp").is_null()) r.timestamp = j.at("timestamp").get<std::string>();
    r.request_key = j.value("request_key", "");
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.judge_id = j.value("judge_id", "");
    r.attempt = j.at("attempt").get<int>();
    r.status = j.at("status").get<std::string>();
    r.reason = j.value("reason", "");
    r.text = j.at("text").get<std::string>();
    r.request_body = j.value("request_body", "");
    r.response_body = j.value("response_body", "");
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// nullopt = accepted; otherwise the rejection reason.
using Validator = std::function<std::optional<std::string>(const RawResponse&)>;

/// Accepts a complete ranked list of `batch`; the reason starts with the ParseErrorKind name.
inline Validator ranking_validator(const Batch& batch, const Corpus& corpus) {
    return [&batch, &corpus](const RawResponse& raw) -> std::optional<std::string> {
        try {
            (void)parse_ranked_list(raw, batch, corpus);
            return std::nullopt;
        } catch (const ParseError& e) {
            return std::string(e.what());
        }
    };
}

inline Validator classification_validator() {
    return [](const RawResponse& raw) -> std::optional<std::string> {
        try {
            (void)parse_category(raw);
            return std::nullopt;
        } catch (const ParseError& e) {
            return std::string(e.what());
        }
    };
}

struct BackoffPolicy {
    std::chrono::milliseconds base{500};
    std::chrono::milliseconds cap{30'000};

    /// Full jitter: uniform in [0, min(cap, base * 2^(n-1))].
    [[nodiscard]] std::chrono::milliseconds delay(int transport_failures, Xoshiro256& rng) const {
        const double ceiling =
            std::min(static_cast<double>(cap.count()), static_cast<double>(base.count()) * std::ldexp(1.0, transport_failures - 1));
        return std::chrono::milliseconds(static_cast<long long>(rng.uniform01() * ceiling));
    }
};

struct EvaluateOptions {
    std::string request_key;
    const Batch* batch = nullptr;
    BackoffPolicy backoff;
    std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    std::function<void(const ExchangeRecord&)> on_attempt;
};

/// Runs up to max_retries + 1 attempts and returns the first accepted reply.
inline RawResponse evaluate(Judge& judge, const JudgeConfig& config, const PromptText& prompt, const Validator& validator,
                            const EvaluateOptions& options = {}) {
    config.validate();
    const auto fingerprint = request_fingerprint(config, prompt);
    auto jitter_rng = Xoshiro256(fnv1a64(fingerprint));
    const int max_attempts = config.max_retries + 1;
    int transport_failures = 0;
    std::string last_reason = "no attempt made";
    std::optional<JudgeError> last_transport;

    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        ExchangeRecord record;
        if (!judge.offline()) record.timestamp = utc_timestamp();
        record.request_key = options.request_key;
        record.fingerprint = fingerprint;
        record.judge_id = judge.id();
        record.attempt = attempt;

        Completion completion;
        try {
            completion = judge.complete(JudgeRequest{&prompt, options.batch, attempt});
        } catch (const JudgeError& e) {
            record.status = "transport_error";
            record.reason = e.what();
            if (options.on_attempt) options.on_attempt(record);
            if (!e.retryable()) throw;
            last_transport = e;
            last_reason = e.what();
            ++transport_failures;
            if (attempt < max_attempts) options.sleep(options.backoff.delay(transport_failures, jitter_rng));
            continue;
        }

        RawResponse raw{completion.text, attempt, judge.id(), fingerprint};
        record.text = completion.text;
        record.request_body = std::move(completion.request_body);
        record.response_body = std::move(completion.response_body);
        const auto rejection = validator ? validator(raw) : std::nullopt;
        record.status = rejection ? "invalid" : "ok";
        record.reason = rejection.value_or("");
        if (options.on_attempt) options.on_attempt(record);
        if (!rejection) return raw;
        last_transport.reset();
        last_reason = *rejection;
    }
    if (last_transport) throw JudgeError(last_transport->kind(), std::string(last_transport->what()) + " (after " +
                                                                     std::to_string(max_attempts) + " attempts)");
    throw JudgeError(JudgeErrorKind::ExhaustedRetries,
                     "no valid response after " + std::to_string(max_attempts) + " attempts; last: " + last_reason);
}

}  // namespace catbench

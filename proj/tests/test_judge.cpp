#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <atomic>

#include "catbench/judge.hpp"
#include "test_support.hpp"

using namespace catbench;
using catbench::testing::make_corpus;

namespace {

const Corpus& corpus3() {
    static const Corpus c = make_corpus(1, 1, 1);
    return c;
}

const Batch batch3{0, {"p03", "p01", "p02"}};

const std::string kValid = "1. Author 1 - Poem 1 : 5\n2. Author 2 - Poem 2 : 3\n3. Author 3 - Poem 3 : 1\n";

EvaluateOptions quiet_options(std::vector<ExchangeRecord>* log = nullptr, std::vector<long long>* sleeps = nullptr) {
    EvaluateOptions o;
    o.batch = &batch3;
    o.sleep = [sleeps](std::chrono::milliseconds d) {
        if (sleeps) sleeps->push_back(d.count());
    };
    if (log) o.on_attempt = [log](const ExchangeRecord& r) { log->push_back(r); };
    return o;
}

class FailingJudge final : public Judge {
public:
    FailingJudge(int failures, bool retryable, std::string then) : failures_(failures), retryable_(retryable), then_(std::move(then)) {}
    [[nodiscard]] std::string id() const override { return "failing"; }
    Completion complete(const JudgeRequest&) override {
        ++calls;
        if (calls <= failures_) throw JudgeError(JudgeErrorKind::Timeout, "timed out", retryable_);
        return {then_, {}, {}};
    }
    int calls = 0;

private:
    int failures_;
    bool retryable_;
    std::string then_;
};

}  // namespace

TEST_CASE("judge: config validation and JSON", "[judge]") {
    JudgeConfig c;
    CHECK(c.temperature == 1.0);
    CHECK(c.max_retries == 5);
    c.validate();
    c.temperature = -1;
    CHECK_THROWS_AS(c.validate(), JudgeError);
    c = JudgeConfig{};
    c.max_concurrency = 0;
    CHECK_THROWS_AS(c.validate(), JudgeError);

    JudgeConfig d{Provider::RemoteB, "gpt-4o", 0.7, 3, std::chrono::milliseconds(900), 2, "http://localhost:1", 100};
    const auto back = nlohmann::json(d).get<JudgeConfig>();
    CHECK(nlohmann::json(back) == nlohmann::json(d));
    CHECK(provider_from_name("anthropic") == Provider::RemoteA);
    CHECK(provider_from_name("OpenAI") == Provider::RemoteB);
    try {
        (void)provider_from_name("bard");
        FAIL("expected an error");
    } catch (const JudgeError& e) {
        CHECK(e.kind() == JudgeErrorKind::BadConfig);
        CHECK(e.failure_class() == FailureClass::Validation);
    }
}

TEST_CASE("judge: fingerprint covers provider, model, temperature and prompt", "[judge]") {
    const PromptText p{"hello", 1, PromptMode::RankedList, "Quality"};
    const PromptText q{"hello!", 1, PromptMode::RankedList, "Quality"};
    JudgeConfig a;
    JudgeConfig b = a;
    b.temperature = 0.5;
    JudgeConfig c = a;
    c.model_name = "other";
    const auto fp = request_fingerprint(a, p);
    CHECK(fp.size() == 16);
    CHECK(fp == request_fingerprint(a, p));
    CHECK(fp != request_fingerprint(a, q));
    CHECK(fp != request_fingerprint(b, p));
    CHECK(fp != request_fingerprint(c, p));
}

TEST_CASE("judge: first valid reply wins", "[judge]") {
    ScriptedJudge judge({kValid});
    std::vector<ExchangeRecord> log;
    const PromptText prompt{"rank", 3, PromptMode::RankedList, "Quality"};
    const auto raw = evaluate(judge, JudgeConfig{}, prompt, ranking_validator(batch3, corpus3()), quiet_options(&log));
    CHECK(raw.text == kValid);
    CHECK(raw.attempt == 1);
    CHECK(judge.calls() == 1);
    REQUIRE(log.size() == 1);
    CHECK(log[0].status == "ok");
    CHECK_FALSE(log[0].timestamp.has_value());
}

TEST_CASE("judge: each parse failure costs exactly one retry", "[judge]") {
    const std::vector<std::pair<std::string, ParseErrorKind>> bad{
        {"1. Author 1 - Poem 1 : 5\n2. Author 2 - Poem 2 : 3\n", ParseErrorKind::IncompleteList},
        {"1. Author 1 - Poem 1 : 5\n2. Author 1 - Poem 1 : 3\n3. Author 3 - Poem 3 : 1\n", ParseErrorKind::DuplicateEntry},
        {"I'm sorry, but I cannot evaluate these poems.", ParseErrorKind::Refusal},
        {"1. Author 1 - Poem 1 : 7\n2. Author 2 - Poem 2 : 3\n3. Author 3 - Poem 3 : 1\n", ParseErrorKind::OutOfRangeScore},
    };
    for (const auto& [reply, kind] : bad) {
        ScriptedJudge judge({reply, kValid});
        std::vector<ExchangeRecord> log;
        std::vector<long long> sleeps;
        const PromptText prompt{"rank", 3, PromptMode::RankedList, "Quality"};
        const auto raw = evaluate(judge, JudgeConfig{}, prompt, ranking_validator(batch3, corpus3()), quiet_options(&log, &sleeps));
        CHECK(raw.attempt == 2);
        CHECK(judge.calls() == 2);
        REQUIRE(log.size() == 2);
        CHECK(log[0].status == "invalid");
        CHECK(log[0].reason.starts_with(std::string(parse_error_name(kind)) + ":"));
        CHECK(log[1].status == "ok");
        CHECK(log[0].fingerprint == log[1].fingerprint);
        CHECK(sleeps.empty());
    }
}

TEST_CASE("judge: exhausted retries", "[judge]") {
    JudgeConfig config;
    config.max_retries = 2;
    ScriptedJudge judge({"nope", "nope", "nope", kValid});
    const PromptText prompt{"rank", 3, PromptMode::RankedList, "Quality"};
    try {
        (void)evaluate(judge, config, prompt, ranking_validator(batch3, corpus3()), quiet_options());
        FAIL("expected an error");
    } catch (const JudgeError& e) {
        CHECK(e.kind() == JudgeErrorKind::ExhaustedRetries);
        CHECK(e.failure_class() == FailureClass::Provider);
        CHECK(std::string(e.what()).find("3 attempts") != std::string::npos);
    }
    CHECK(judge.calls() == 3);
}

TEST_CASE("judge: transport failures back off and retry", "[judge]") {
    FailingJudge judge(2, true, kValid);
    std::vector<long long> sleeps;
    JudgeConfig config;
    const PromptText prompt{"rank", 3, PromptMode::RankedList, "Quality"};
    auto options = quiet_options(nullptr, &sleeps);
    options.backoff = BackoffPolicy{std::chrono::milliseconds(100), std::chrono::milliseconds(150)};
    const auto raw = evaluate(judge, config, prompt, ranking_validator(batch3, corpus3()), options);
    CHECK(raw.attempt == 3);
    REQUIRE(sleeps.size() == 2);
    CHECK(sleeps[0] <= 100);
    CHECK(sleeps[1] <= 150);

    FailingJudge always(100, true, kValid);
    config.max_retries = 1;
    try {
        (void)evaluate(always, config, prompt, nullptr, quiet_options());
        FAIL("expected an error");
    } catch (const JudgeError& e) {
        CHECK(e.kind() == JudgeErrorKind::Timeout);
    }
    CHECK(always.calls == 2);

    FailingJudge fatal(1, false, kValid);
    CHECK_THROWS_AS(evaluate(fatal, JudgeConfig{}, prompt, nullptr, quiet_options()), JudgeError);
    CHECK(fatal.calls == 1);
}

TEST_CASE("judge: backoff delay is bounded by the doubling ceiling", "[judge]") {
    BackoffPolicy policy{std::chrono::milliseconds(500), std::chrono::milliseconds(30'000)};
    Xoshiro256 rng(1);
    for (int n = 1; n <= 10; ++n)
        for (int i = 0; i < 50; ++i) {
            const auto d = policy.delay(n, rng).count();
            CHECK(d >= 0);
            CHECK(d <= std::min(30'000LL, 500LL << (n - 1)));
        }
}

TEST_CASE("judge: scripted judge runs dry", "[judge]") {
    ScriptedJudge judge({});
    try {
        (void)judge.complete(JudgeRequest{});
        FAIL("expected an error");
    } catch (const JudgeError& e) {
        CHECK(e.kind() == JudgeErrorKind::ProviderError);
        CHECK_FALSE(e.retryable());
    }
}

TEST_CASE("synthetic: noiseless ranking reproduces ground truth", "[judge][synthetic]") {
    const auto corpus = catbench::testing::paper_layout_corpus();
    const auto plan = stratified_subsets(corpus, 5, 10, 4);
    for (const auto& batch : plan.batches) {
        const auto raw = synthetic_rank(batch, corpus, NoiseModel{0.0, 1});
        const auto parsed = parse_ranked_list(raw, batch, corpus);
        REQUIRE(parsed.size() == 15);
        for (std::size_t i = 0; i < 15; ++i) {
            const auto expected = static_cast<int>(i / 5) + 1;
            CHECK(category_rank(corpus.find(parsed.resolved_ids[i])->category) == expected);
            CHECK(parsed.entries[i].score == (expected == 1 ? 5 : expected == 2 ? 3 : 1));
        }
        // Within a category, ascending id.
        for (std::size_t i = 1; i < 15; ++i)
            if (i % 5 != 0) CHECK(parsed.resolved_ids[i - 1] < parsed.resolved_ids[i]);
    }
}

TEST_CASE("synthetic: output is valid and seed-determined under noise", "[judge][synthetic]") {
    const auto corpus = catbench::testing::paper_layout_corpus();
    const auto plan = stratified_subsets(corpus, 5, 20, 4);
    for (double sigma : {0.5, 2.0, 8.0}) {
        for (const auto& batch : plan.batches) {
            const auto a = synthetic_rank(batch, corpus, NoiseModel{sigma, 9});
            CHECK(a.text == synthetic_rank(batch, corpus, NoiseModel{sigma, 9}).text);
            CHECK_NOTHROW(parse_ranked_list(a, batch, corpus));
        }
    }
    const auto& b = plan.batches.front();
    CHECK(synthetic_rank(b, corpus, NoiseModel{2.0, 1}).text != synthetic_rank(b, corpus, NoiseModel{2.0, 2}).text);
}

TEST_CASE("synthetic: huge noise makes positions uniform", "[judge][synthetic][property]") {
    // Position of one fixed Good poem in a 5-item batch; chi-square df 4 at alpha 0.001 is 18.47.
    const auto corpus = make_corpus(1, 2, 2);
    const Batch batch{0, corpus.sorted_ids()};
    std::array<int, 5> hits{};
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto parsed = parse_ranked_list(synthetic_rank(batch, corpus, NoiseModel{1e6, seed}), batch, corpus);
        const auto at = std::find(parsed.resolved_ids.begin(), parsed.resolved_ids.end(), "p01") - parsed.resolved_ids.begin();
        ++hits[static_cast<std::size_t>(at)];
    }
    double chi2 = 0;
    for (int h : hits) chi2 += (h - 200.0) * (h - 200.0) / 200.0;
    CHECK(chi2 < 18.47);
}

TEST_CASE("synthetic: scale policies", "[judge][synthetic]") {
    CHECK(latent_bins_policy({1, 15, -1.0, -3.0, -1.0}) == 5);
    CHECK(latent_bins_policy({8, 15, -2.0, -3.0, -1.0}) == 3);
    CHECK(latent_bins_policy({15, 15, -3.0, -3.0, -1.0}) == 1);
    CHECK(latent_bins_policy({1, 1, 0.0, 0.0, 0.0}) == 5);
    CHECK(position_quintile_policy({1, 15}) == 5);
    CHECK(position_quintile_policy({4, 15}) == 4);
    CHECK(position_quintile_policy({15, 15}) == 1);
}

TEST_CASE("synthetic: classification", "[judge][synthetic]") {
    const auto corpus = make_corpus(1, 1, 1);
    for (const auto& p : corpus.poems()) CHECK(synthetic_classify(p, NoiseModel{0.0, 3}, 0) == p.category);

    SyntheticJudge judge(corpus, 0.0, 7);
    const auto prompt = render_classification_prompt(*corpus.find("p02"));
    const Batch batch{1, {"p02"}};
    const auto c = judge.complete(JudgeRequest{&prompt, &batch, 1});
    CHECK(parse_category(RawResponse{c.text, 1, "", ""}) == Category::Medium);
    CHECK_FALSE(classification_validator()(RawResponse{c.text, 1, "", ""}).has_value());
    CHECK(classification_validator()(RawResponse{"<category>Okay</category>", 1, "", ""}).has_value());
}

TEST_CASE("synthetic: judge ties noise to criterion and batch", "[judge][synthetic]") {
    const auto corpus = catbench::testing::paper_layout_corpus();
    const auto batch = stratified_subsets(corpus, 5, 1, 0).batches.front();
    SyntheticJudge judge(corpus, 2.0, 11);
    const auto pq = render_ranking_prompt(builtin_criteria()[1], batch, corpus);
    const auto pc = render_ranking_prompt(builtin_criteria()[0], batch, corpus);
    const auto q1 = judge.complete(JudgeRequest{&pq, &batch, 1}).text;
    CHECK(q1 == judge.complete(JudgeRequest{&pq, &batch, 2}).text);
    CHECK(q1 != judge.complete(JudgeRequest{&pc, &batch, 1}).text);
    CHECK(synthetic_call_seed(1, "Quality", 0) != synthetic_call_seed(1, "Quality", 1));
}

TEST_CASE("judge: exchange record JSON", "[judge]") {
    ExchangeRecord r{"2026-01-01T00:00:00Z", "Quality/3", "abcd", "mock", 2, "invalid", "Refusal: x", "text", "{}", "{\"a\":1}"};
    CHECK(nlohmann::json(nlohmann::json(r).get<ExchangeRecord>()) == nlohmann::json(r));
    ExchangeRecord offline{std::nullopt, "k", "f", "j", 1, "ok", "", "t", "", ""};
    const auto j = nlohmann::json(offline);
    CHECK(j.at("timestamp").is_null());
    CHECK_FALSE(j.contains("request_body"));
    CHECK(utc_timestamp().size() == 20);
}

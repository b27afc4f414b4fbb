#pragma once

// Experiment orchestration: config -> plan -> prompts -> judge (+retries) ->
// parse -> rows -> stats, and the on-disk run artifact.
//
// Artifact layout (one directory per run):
//   config.json  plan.json  exchanges.jsonl  rankings.csv  [classifications.csv]
//   aggregates.csv  stats.json  report.md  tables/  figures/
// The directory is assembled under a temporary name and renamed into place.

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "catbench/analysis.hpp"
#include "catbench/corpus.hpp"
#include "catbench/error.hpp"
#include "catbench/judge.hpp"
#include "catbench/parser.hpp"
#include "catbench/prompts.hpp"
#include "catbench/report.hpp"
#include "catbench/sampler.hpp"
#include "catbench/scoring.hpp"

namespace catbench {

struct ExperimentConfig {
    Experiment experiment = Experiment::RankSubsets;
    std::string corpus_root;
    std::vector<std::string> criteria;
    std::vector<ScoringMethod> methods{ScoringMethod::Scale, ScoringMethod::RankDerived};
    JudgeConfig judge;
    PlanKind plan_kind = PlanKind::StratifiedSubsets;  ///< Custom only; presets fix it
    PlanParams params;
    std::uint64_t seed = 0;
    double sigma = 0.0;           ///< Synthetic judge noise
    std::string mock_script;      ///< Mock judge: JSON array of replies
    std::string templates_dir;    ///< empty = built-in prompts
    std::string output_dir;       ///< not part of the snapshot
};

/// Plan shape and defaults of the four studies.
inline ExperimentConfig preset_config(Experiment experiment) {
    ExperimentConfig c;
    c.experiment = experiment;
    for (const auto& crit : builtin_criteria()) c.criteria.push_back(crit.name);
    c.judge.temperature = 1.0;
    switch (experiment) {
        case Experiment::Classify:
            c.criteria.clear();
            c.methods.clear();
            c.plan_kind = PlanKind::PerItem;
            break;
        case Experiment::RankFull:
            c.plan_kind = PlanKind::FullShuffles;
            c.params = {0, 10, 0};
            break;
        case Experiment::RankSubsets:
            c.plan_kind = PlanKind::StratifiedSubsets;
            c.params = {5, 100, 0};
            break;
        case Experiment::Reliability:
            c.plan_kind = PlanKind::RepeatedSubset;
            c.params = {5, 10, 10};
            break;
        case Experiment::Custom:
            c.plan_kind = PlanKind::StratifiedSubsets;
            c.params = {5, 100, 0};
            break;
    }
    return c;
}

inline PlanKind effective_plan_kind(const ExperimentConfig& c) {
    switch (c.experiment) {
        case Experiment::Classify: return PlanKind::PerItem;
        case Experiment::RankFull: return PlanKind::FullShuffles;
        case Experiment::RankSubsets: return PlanKind::StratifiedSubsets;
        case Experiment::Reliability: return PlanKind::RepeatedSubset;
        case Experiment::Custom: return c.plan_kind;
    }
    return c.plan_kind;
}

inline void validate_config(const ExperimentConfig& c, const PromptTemplates& templates) {
    c.judge.validate();
    if (!(c.sigma >= 0.0)) throw Error("sigma must be >= 0");
    const auto kind = effective_plan_kind(c);
    if (c.experiment != Experiment::Classify) {
        if (c.criteria.empty()) throw Error("at least one criterion is required");
        if (c.methods.empty()) throw Error("at least one scoring method is required");
        for (const auto& name : c.criteria) (void)templates.criterion(name);
        if (kind == PlanKind::PerItem) throw Error("per-item plans are only used by the Classify experiment");
    }
    switch (kind) {
        case PlanKind::StratifiedSubsets:
            if (c.params.k_per_category < 1 || c.params.n_batches < 1)
                throw Error("stratified subsets need k_per_category >= 1 and n_batches >= 1");
            break;
        case PlanKind::FullShuffles:
            if (c.params.n_batches < 1) throw Error("full shuffles need n_batches >= 1");
            break;
        case PlanKind::RepeatedSubset:
            if (c.params.k_per_category < 1) throw Error("repeated subset needs k_per_category >= 1");
            if (c.params.repetitions < 2) throw Error("repeated subset needs repetitions >= 2");
            break;
        case PlanKind::PerItem: break;
    }
}

/// Snapshot written to config.json (output_dir excluded so reruns elsewhere compare equal).
inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    std::vector<std::string> methods;
    for (auto m : c.methods) methods.emplace_back(scoring_method_name(m));
    j = nlohmann::json{{"experiment", experiment_name(c.experiment)},
                       {"corpus_root", c.corpus_root},
                       {"criteria", c.criteria},
                       {"methods", methods},
                       {"judge", c.judge},
                       {"plan_kind", plan_kind_name(effective_plan_kind(c))},
                       {"k_per_category", c.params.k_per_category},
                       {"n_batches", c.params.n_batches},
                       {"repetitions", c.params.repetitions},
                       {"seed", c.seed},
                       {"sigma", c.sigma},
                       {"mock_script", c.mock_script},
                       {"templates_dir", c.templates_dir}};
}

/// Missing keys fall back to the preset of the named experiment.
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    c = preset_config(experiment_from_name(j.value("experiment", std::string("RankSubsets"))));
    c.corpus_root = j.value("corpus_root", c.corpus_root);
    if (j.contains("criteria")) j.at("criteria").get_to(c.criteria);
    if (j.contains("methods")) {
        c.methods.clear();
        for (const auto& m : j.at("methods")) c.methods.push_back(scoring_method_from_name(m.get<std::string>()));
    }
    if (j.contains("judge")) j.at("judge").get_to(c.judge);
    if (j.contains("plan_kind")) c.plan_kind = plan_kind_from_name(j.at("plan_kind").get<std::string>());
    c.params.k_per_category = j.value("k_per_category", c.params.k_per_category);
    c.params.n_batches = j.value("n_batches", c.params.n_batches);
    c.params.repetitions = j.value("repetitions", c.params.repetitions);
    c.seed = j.value("seed", c.seed);
    c.sigma = j.value("sigma", c.sigma);
    c.mock_script = j.value("mock_script", c.mock_script);
    c.templates_dir = j.value("templates_dir", c.templates_dir);
    c.output_dir = j.value("output_dir", c.output_dir);
}

inline BatchPlan build_plan(const ExperimentConfig& c, const Corpus& corpus) {
    switch (effective_plan_kind(c)) {
        case PlanKind::PerItem: return per_item(corpus);
        case PlanKind::FullShuffles: return full_shuffles(corpus, c.params.n_batches, c.seed);
        case PlanKind::StratifiedSubsets: return stratified_subsets(corpus, c.params.k_per_category, c.params.n_batches, c.seed);
        case PlanKind::RepeatedSubset: {
            const auto source = stratified_subsets(corpus, c.params.k_per_category, 1, c.seed).batches.front();
            auto plan = repeated_subset(source, c.params.repetitions, c.seed);
            plan.params.k_per_category = c.params.k_per_category;
            return plan;
        }
    }
    throw Error("unhandled plan kind");
}

inline PromptTemplates load_templates(const ExperimentConfig& c) {
    return c.templates_dir.empty() ? PromptTemplates::defaults() : PromptTemplates::load(c.templates_dir);
}

// ---------------------------------------------------------------------------
// Corpus index stored with the plan (bodies stay in the corpus directory)

inline nlohmann::json corpus_index_json(const Corpus& corpus) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : corpus.poems())
        arr.push_back({{"id", p.id}, {"category", category_name(p.category)}, {"author", p.author}, {"title", p.title}});
    return arr;
}

inline Corpus corpus_from_index(const nlohmann::json& arr) {
    std::vector<Poem> poems;
    for (const auto& e : arr) {
        Poem p;
        p.id = e.at("id").get<std::string>();
        auto c = parse_category_label(e.at("category").get<std::string>());
        if (!c) throw Error("bad category in corpus index for " + p.id);
        p.category = *c;
        p.author = e.at("author").get<std::string>();
        p.title = e.at("title").get<std::string>();
        p.body = p.id;  // placeholder, never rendered
        poems.push_back(std::move(p));
    }
    return Corpus::from_poems(std::move(poems));
}

// ---------------------------------------------------------------------------
// Execution

/// Collects per-request exchange records and releases them in request order.
class OrderedLog {
public:
    using Sink = std::function<void(const ExchangeRecord&)>;

    OrderedLog(std::size_t slots, Sink sink) : slots_(slots), sink_(std::move(sink)) {}

    void complete(std::size_t index, std::vector<ExchangeRecord> records) {
        std::lock_guard lock(mutex_);
        slots_.at(index) = std::move(records);
        while (next_ < slots_.size() && slots_[next_]) {
            for (const auto& r : *slots_[next_]) emit(r);
            slots_[next_].reset();
            ++next_;
        }
    }

    /// Flushes completed slots left behind a gap (aborted runs).
    void finish() {
        std::lock_guard lock(mutex_);
        for (; next_ < slots_.size(); ++next_)
            if (slots_[next_])
                for (const auto& r : *slots_[next_]) emit(r);
    }

    [[nodiscard]] const std::vector<ExchangeRecord>& records() const { return all_; }

private:
    void emit(const ExchangeRecord& r) {
        all_.push_back(r);
        if (sink_) sink_(r);
    }

    std::mutex mutex_;
    std::vector<std::optional<std::vector<ExchangeRecord>>> slots_;
    std::size_t next_ = 0;
    Sink sink_;
    std::vector<ExchangeRecord> all_;
};

struct RunArtifact {
    ExperimentConfig config;
    BatchPlan plan;
    Corpus corpus;  ///< full corpus, or the stored index after a reload
    std::vector<ExchangeRecord> exchanges;
    std::vector<RankingRow> rankings;
    std::vector<ClassificationRow> classifications;
    StatsReport stats;
    std::string abort_reason;  ///< set when a fatal error stopped the run
    std::exception_ptr error;  ///< the fatal error itself (live runs only)

    [[nodiscard]] bool complete() const { return stats.complete() && abort_reason.empty(); }
};

struct ExecuteOptions {
    OrderedLog::Sink exchange_sink;
    BackoffPolicy backoff;
    std::function<void(std::chrono::milliseconds)> sleep;  ///< empty = real sleep
    std::function<void(std::size_t done, std::size_t total)> progress;
};

inline StatsReport recompute_stats(const RunArtifact& a) {
    return compute_stats(a.config.experiment, a.config.criteria, a.config.methods, a.plan, a.corpus, a.rankings,
                         a.classifications, a.exchanges);
}

/// Runs every request of the plan. Judge failures never escape: a request that
/// exhausts its retries is recorded and skipped, any other error stops the run
/// and is stored in the returned artifact.
inline RunArtifact execute_experiment(const ExperimentConfig& config, const Corpus& corpus, Judge& judge,
                                      const PromptTemplates& templates, const ExecuteOptions& options = {}) {
    validate_config(config, templates);
    RunArtifact artifact;
    artifact.config = config;
    artifact.corpus = corpus;
    artifact.plan = build_plan(config, corpus);

    struct Request {
        std::string key;
        const Batch* batch;
        PromptText prompt;
    };
    std::vector<Request> requests;
    const bool classify = config.experiment == Experiment::Classify;
    if (classify) {
        for (const auto& b : artifact.plan.batches)
            requests.push_back({request_key(kClassificationKey, b.batch_id), &b,
                                render_classification_prompt(*corpus.find(b.poem_ids.front()), templates)});
    } else {
        for (const auto& name : config.criteria) {
            const auto& criterion = templates.criterion(name);
            for (const auto& b : artifact.plan.batches)
                requests.push_back({request_key(name, b.batch_id), &b, render_ranking_prompt(criterion, b, corpus, templates)});
        }
    }

    std::vector<std::optional<RawResponse>> accepted(requests.size());
    OrderedLog log(requests.size(), options.exchange_sink);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::atomic<bool> abort{false};
    std::mutex error_mutex;

    auto worker = [&] {
        for (;;) {
            if (abort.load()) return;
            const auto i = next.fetch_add(1);
            if (i >= requests.size()) return;
            const auto& req = requests[i];
            std::vector<ExchangeRecord> records;
            EvaluateOptions eo;
            eo.request_key = req.key;
            eo.batch = req.batch;
            eo.backoff = options.backoff;
            if (options.sleep) eo.sleep = options.sleep;
            eo.on_attempt = [&records](const ExchangeRecord& r) { records.push_back(r); };
            const auto validator = classify ? classification_validator() : ranking_validator(*req.batch, corpus);
            try {
                accepted[i] = evaluate(judge, config.judge, req.prompt, validator, eo);
            } catch (const JudgeError& e) {
                if (e.kind() != JudgeErrorKind::ExhaustedRetries) {
                    std::lock_guard lock(error_mutex);
                    if (!abort.exchange(true)) {
                        artifact.abort_reason = req.key + ": " + e.what();
                        artifact.error = std::make_exception_ptr(JudgeError(e.kind(), req.key + ": " + e.what(), e.retryable()));
                    }
                }
            } catch (const std::exception& e) {
                std::lock_guard lock(error_mutex);
                if (!abort.exchange(true)) {
                    artifact.abort_reason = req.key + ": " + e.what();
                    artifact.error = std::current_exception();
                }
            }
            log.complete(i, std::move(records));
            const auto finished = done.fetch_add(1) + 1;
            if (options.progress) options.progress(finished, requests.size());
        }
    };

    const auto threads = judge.order_independent()
                             ? std::clamp<std::size_t>(static_cast<std::size_t>(config.judge.max_concurrency), 1, std::max<std::size_t>(requests.size(), 1))
                             : 1;
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    log.finish();
    artifact.exchanges = log.records();

    for (std::size_t i = 0; i < requests.size(); ++i) {
        if (!accepted[i]) continue;
        const auto& req = requests[i];
        if (classify) {
            const Poem* poem = corpus.find(req.batch->poem_ids.front());
            artifact.classifications.push_back({req.batch->batch_id, poem->id, poem->category, parse_category(*accepted[i])});
        } else {
            const auto parsed = parse_ranked_list(*accepted[i], *req.batch, corpus);
            const auto rows = ranking_rows(req.prompt.criterion, *req.batch, parsed);
            artifact.rankings.insert(artifact.rankings.end(), rows.begin(), rows.end());
        }
    }
    artifact.stats = recompute_stats(artifact);
    return artifact;
}

// ---------------------------------------------------------------------------
// Persistence

inline std::string exchange_line(const ExchangeRecord& r) { return nlohmann::json(r).dump() + "\n"; }

inline ReportContext report_context(const RunArtifact& a) {
    ReportContext ctx;
    ctx.title = std::string(experiment_name(a.config.experiment)) + " run";
    const auto& j = a.config.judge;
    ctx.facts = {{"judge", std::string(provider_name(j.provider)) + " / " + j.model_name},
                 {"temperature", text::format_double(j.temperature)},
                 {"corpus", std::to_string(a.corpus.size()) + " poems (" + std::to_string(a.corpus.count(Category::Good)) + " Good, " +
                                std::to_string(a.corpus.count(Category::Medium)) + " Medium, " +
                                std::to_string(a.corpus.count(Category::Bad)) + " Bad)"},
                 {"plan", std::string(plan_kind_name(a.plan.kind)) + ", " + std::to_string(a.plan.batches.size()) + " batches"},
                 {"seed", std::to_string(a.config.seed)}};
    if (j.provider == Provider::Synthetic) ctx.facts.emplace_back("sigma", text::format_double(a.config.sigma));
    return ctx;
}

namespace detail {

inline std::string plan_json_text(const RunArtifact& a) {
    nlohmann::json j = a.plan;
    j["corpus"] = corpus_index_json(a.corpus);
    return j.dump(2) + "\n";
}

/// Everything except exchanges.jsonl.
inline void write_artifact_files(const RunArtifact& a, const std::filesystem::path& dir) {
    text::write_file(dir / "config.json", nlohmann::json(a.config).dump(2) + "\n");
    text::write_file(dir / "plan.json", plan_json_text(a));
    text::write_file(dir / "rankings.csv", rankings_csv(a.rankings));
    if (a.config.experiment == Experiment::Classify) text::write_file(dir / "classifications.csv", classifications_csv(a.classifications));
    text::write_file(dir / "aggregates.csv", aggregates_csv(a.stats, a.corpus));
    text::write_file(dir / "stats.json", stats_json_text(a.stats));
    export_report(a.stats, report_context(a), a.corpus, dir);
}

inline std::filesystem::path staging_dir(const std::filesystem::path& dir) {
    static std::atomic<int> counter{0};
    auto name = "." + dir.filename().string() + ".partial-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
    return dir.parent_path() / name;
}

inline void prepare_target(const std::filesystem::path& dir, bool overwrite) {
    std::error_code ec;
    if (std::filesystem::exists(dir, ec)) {
        if (!overwrite && !std::filesystem::is_empty(dir, ec))
            throw IoError(dir.string() + " already exists and is not empty");
    }
    if (!dir.parent_path().empty()) std::filesystem::create_directories(dir.parent_path(), ec);
    if (ec) throw IoError("cannot create " + dir.parent_path().string() + ": " + ec.message());
}

inline void commit(const std::filesystem::path& staging, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    std::filesystem::rename(staging, dir, ec);
    if (ec) throw IoError("cannot move run into " + dir.string() + ": " + ec.message());
}

}  // namespace detail

/// Persists an in-memory artifact (exchanges included) atomically.
inline void write_artifact(const RunArtifact& a, const std::filesystem::path& dir, bool overwrite = false) {
    const auto target = dir.lexically_normal();
    detail::prepare_target(target, overwrite);
    const auto staging = detail::staging_dir(target);
    std::error_code ec;
    std::filesystem::create_directories(staging, ec);
    if (ec) throw IoError("cannot create " + staging.string() + ": " + ec.message());
    try {
        std::string log;
        for (const auto& r : a.exchanges) log += exchange_line(r);
        text::write_file(staging / "exchanges.jsonl", log);
        detail::write_artifact_files(a, staging);
        detail::commit(staging, target);
    } catch (...) {
        std::filesystem::remove_all(staging, ec);
        throw;
    }
}

using JudgeFactory = std::function<std::unique_ptr<Judge>(const ExperimentConfig&, const Corpus&)>;

/// Offline judges; remote providers need a factory from the caller.
inline std::unique_ptr<Judge> make_offline_judge(const ExperimentConfig& c, const Corpus& corpus) {
    switch (c.judge.provider) {
        case Provider::Synthetic: return std::make_unique<SyntheticJudge>(corpus, c.sigma, c.seed);
        case Provider::Mock: {
            if (c.mock_script.empty()) throw JudgeError(JudgeErrorKind::BadConfig, "mock provider needs a script file");
            std::vector<std::string> replies;
            try {
                replies = nlohmann::json::parse(text::read_file(c.mock_script)).get<std::vector<std::string>>();
            } catch (const nlohmann::json::exception& e) {
                throw JudgeError(JudgeErrorKind::BadConfig, "mock script must be a JSON array of strings: " + std::string(e.what()));
            }
            return std::make_unique<ScriptedJudge>(std::move(replies));
        }
        case Provider::RemoteA:
        case Provider::RemoteB:
            throw JudgeError(JudgeErrorKind::BadConfig, "remote provider " + std::string(provider_name(c.judge.provider)) +
                                                            " is not available here");
    }
    throw JudgeError(JudgeErrorKind::BadConfig, "unknown provider");
}

struct RunOptions {
    JudgeFactory judge_factory = make_offline_judge;
    bool overwrite = false;
    ExecuteOptions execute;
};

/// Loads the corpus, runs the experiment and persists the artifact to
/// config.output_dir. The exchange log is streamed in request order while the
/// run progresses. A stopped run is still persisted (flagged incomplete) and
/// its error rethrown afterwards.
inline RunArtifact run_experiment(const ExperimentConfig& config, const RunOptions& options = {}) {
    if (config.output_dir.empty()) throw Error("output_dir is required");
    const auto templates = load_templates(config);
    validate_config(config, templates);
    const auto corpus = load_corpus(config.corpus_root);
    auto judge = options.judge_factory(config, corpus);

    const std::filesystem::path target = std::filesystem::path(config.output_dir).lexically_normal();
    detail::prepare_target(target, options.overwrite);
    const auto staging = detail::staging_dir(target);
    std::error_code ec;
    std::filesystem::create_directories(staging, ec);
    if (ec) throw IoError("cannot create " + staging.string() + ": " + ec.message());

    RunArtifact artifact;
    try {
        std::ofstream log(staging / "exchanges.jsonl", std::ios::binary | std::ios::trunc);
        if (!log) throw IoError("cannot write " + (staging / "exchanges.jsonl").string());
        auto exec = options.execute;
        auto outer = exec.exchange_sink;
        exec.exchange_sink = [&log, outer](const ExchangeRecord& r) {
            log << exchange_line(r);
            log.flush();
            if (outer) outer(r);
        };
        artifact = execute_experiment(config, corpus, *judge, templates, exec);
        log.close();
        if (!log) throw IoError("short write to exchanges.jsonl");
        detail::write_artifact_files(artifact, staging);
        detail::commit(staging, target);
    } catch (...) {
        std::filesystem::remove_all(staging, ec);
        throw;
    }
    if (artifact.error) std::rethrow_exception(artifact.error);
    return artifact;
}

// ---------------------------------------------------------------------------
// Reload

inline RunArtifact load_artifact(const std::filesystem::path& dir) {
    RunArtifact a;
    try {
        a.config = nlohmann::json::parse(text::read_file(dir / "config.json")).get<ExperimentConfig>();
        const auto plan_json = nlohmann::json::parse(text::read_file(dir / "plan.json"));
        a.plan = plan_json.get<BatchPlan>();
        a.corpus = corpus_from_index(plan_json.at("corpus"));
        const auto log = text::read_file(dir / "exchanges.jsonl");
        for (auto line : text::split_lines(log))
            if (!text::trim(line).empty()) a.exchanges.push_back(nlohmann::json::parse(line).get<ExchangeRecord>());
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed artifact in " + dir.string() + ": " + e.what());
    }
    a.rankings = parse_rankings_csv(text::read_file(dir / "rankings.csv"));
    if (a.config.experiment == Experiment::Classify)
        a.classifications = parse_classifications_csv(text::read_file(dir / "classifications.csv"));
    a.stats = recompute_stats(a);
    return a;
}

struct VerifyResult {
    bool stats_identical = false;
    bool aggregates_identical = false;
    [[nodiscard]] bool ok() const { return stats_identical && aggregates_identical; }
};

/// Recomputes stats from the stored rows and compares with the stored files byte for byte.
inline VerifyResult verify_artifact(const std::filesystem::path& dir) {
    const auto a = load_artifact(dir);
    VerifyResult v;
    v.stats_identical = stats_json_text(a.stats) == text::read_file(dir / "stats.json");
    v.aggregates_identical = aggregates_csv(a.stats, a.corpus) == text::read_file(dir / "aggregates.csv");
    return v;
}

}  // namespace catbench

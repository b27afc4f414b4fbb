#pragma once

// Stats phase of a run: stored rankings or classifications in, StatsReport out.
// Live runs and artifact reloads both go through compute_stats, which is what
// makes persisted stats reproducible from the artifact alone.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "catbench/corpus.hpp"
#include "catbench/error.hpp"
#include "catbench/judge.hpp"
#include "catbench/sampler.hpp"
#include "catbench/scoring.hpp"
#include "catbench/stats.hpp"
#include "catbench/text.hpp"

namespace catbench {

enum class Experiment { Classify, RankFull, RankSubsets, Reliability, Custom };

constexpr std::string_view experiment_name(Experiment e) noexcept {
    switch (e) {
        case Experiment::Classify: return "Classify";
        case Experiment::RankFull: return "RankFull";
        case Experiment::RankSubsets: return "RankSubsets";
        case Experiment::Reliability: return "Reliability";
        case Experiment::Custom: return "Custom";
    }
    return "?";
}

inline Experiment experiment_from_name(std::string_view name) {
    for (auto e : {Experiment::Classify, Experiment::RankFull, Experiment::RankSubsets, Experiment::Reliability, Experiment::Custom})
        if (text::iequals(experiment_name(e), name)) return e;
    throw Error("unknown experiment: " + std::string(name));
}

inline constexpr std::string_view kClassificationKey = "Classification";

/// "Quality#17"; classification requests use "Classification#<batch>".
inline std::string request_key(std::string_view criterion, int batch_id) {
    return std::string(criterion) + "#" + std::to_string(batch_id);
}

// ---------------------------------------------------------------------------
// Stored rows

struct RankingRow {
    std::string criterion;
    int batch_id = 0;
    int batch_size = 0;
    int position = 0;
    std::string poem_id;
    int scale_score = 0;
    int rank_score = 0;

    bool operator==(const RankingRow&) const = default;
};

struct ClassificationRow {
    int batch_id = 0;
    std::string poem_id;
    Category truth = Category::Good;
    Category predicted = Category::Good;

    bool operator==(const ClassificationRow&) const = default;
};

inline std::vector<RankingRow> ranking_rows(std::string_view criterion, const Batch& batch, const RankingResponse& response) {
    std::vector<RankingRow> rows;
    const auto k = static_cast<int>(response.entries.size());
    for (std::size_t i = 0; i < response.entries.size(); ++i) {
        const auto& e = response.entries[i];
        rows.push_back({std::string(criterion), batch.batch_id, k, e.position, response.resolved_ids[i], e.score, k - e.position + 1});
    }
    return rows;
}

inline std::string rankings_csv(const std::vector<RankingRow>& rows) {
    std::string out = "criterion,batch_id,batch_size,position,poem_id,scale_score,rank_score\n";
    for (const auto& r : rows)
        out += text::csv_row({r.criterion, std::to_string(r.batch_id), std::to_string(r.batch_size), std::to_string(r.position),
                              r.poem_id, std::to_string(r.scale_score), std::to_string(r.rank_score)});
    return out;
}

inline std::string classifications_csv(const std::vector<ClassificationRow>& rows) {
    std::string out = "batch_id,poem_id,true_category,predicted_category\n";
    for (const auto& r : rows)
        out += text::csv_row({std::to_string(r.batch_id), r.poem_id, std::string(category_name(r.truth)),
                              std::string(category_name(r.predicted))});
    return out;
}

namespace detail {

inline int csv_int(const std::string& s, std::string_view what) {
    long long v = 0;
    if (!text::parse_int(s, v)) throw Error("bad " + std::string(what) + " value in artifact: \"" + s + "\"");
    return static_cast<int>(v);
}

inline std::vector<std::vector<std::string>> csv_body(std::string_view data, std::size_t columns, std::string_view file) {
    auto rows = text::parse_csv(data);
    if (rows.empty()) throw Error(std::string(file) + " has no header");
    rows.erase(rows.begin());
    for (const auto& r : rows)
        if (r.size() != columns) throw Error(std::string(file) + " row has " + std::to_string(r.size()) + " fields");
    return rows;
}

inline Category csv_category(const std::string& s) {
    auto c = parse_category_label(s);
    if (!c) throw Error("bad category in artifact: \"" + s + "\"");
    return *c;
}

}  // namespace detail

inline std::vector<RankingRow> parse_rankings_csv(std::string_view data) {
    std::vector<RankingRow> rows;
    for (const auto& f : detail::csv_body(data, 7, "rankings.csv"))
        rows.push_back({f[0], detail::csv_int(f[1], "batch_id"), detail::csv_int(f[2], "batch_size"), detail::csv_int(f[3], "position"),
                        f[4], detail::csv_int(f[5], "scale_score"), detail::csv_int(f[6], "rank_score")});
    return rows;
}

inline std::vector<ClassificationRow> parse_classifications_csv(std::string_view data) {
    std::vector<ClassificationRow> rows;
    for (const auto& f : detail::csv_body(data, 4, "classifications.csv"))
        rows.push_back({detail::csv_int(f[0], "batch_id"), f[1], detail::csv_category(f[2]), detail::csv_category(f[3])});
    return rows;
}

// ---------------------------------------------------------------------------
// Request bookkeeping

struct RequestOutcome {
    std::vector<std::string> failed;         ///< "key: last reason"
    std::vector<std::string> not_attempted;  ///< keys with no exchange at all
};

/// Classifies every planned request key by its exchange records.
inline RequestOutcome summarize_requests(const std::vector<std::string>& keys, const std::vector<ExchangeRecord>& exchanges) {
    std::map<std::string, const ExchangeRecord*> last;
    std::set<std::string> ok;
    for (const auto& r : exchanges) {
        last[r.request_key] = &r;
        if (r.status == "ok") ok.insert(r.request_key);
    }
    RequestOutcome out;
    for (const auto& key : keys) {
        if (ok.contains(key)) continue;
        auto it = last.find(key);
        if (it == last.end())
            out.not_attempted.push_back(key);
        else
            out.failed.push_back(key + ": " + it->second->reason + " (attempt " + std::to_string(it->second->attempt) + ")");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report

struct MethodStats {
    std::string criterion;
    ScoringMethod method = ScoringMethod::RankDerived;
    int responses = 0;
    std::vector<PoemAggregate> aggregates;
    std::vector<std::string> zero_appearances;
    OrderedSequence ordering;
    std::optional<stats::CorrelationResult> src;
    std::string src_error;
    std::optional<stats::AnovaResult> anova;
    std::string anova_error;
    std::optional<stats::IccResult> icc;
    std::string icc_error;
};

struct ClassificationStats {
    ClassificationSummary summary;
    std::optional<stats::CorrelationResult> src;
    std::string src_error;
};

struct StatsReport {
    Experiment experiment = Experiment::RankSubsets;
    std::size_t planned_requests = 0;
    AppearanceStats appearance;
    std::vector<MethodStats> results;
    std::optional<ClassificationStats> classification;
    RequestOutcome requests;
    std::vector<std::string> warnings;

    [[nodiscard]] bool complete() const { return requests.failed.empty() && requests.not_attempted.empty(); }

    [[nodiscard]] const MethodStats* find(std::string_view criterion, ScoringMethod method) const {
        for (const auto& r : results)
            if (r.criterion == criterion && r.method == method) return &r;
        return nullptr;
    }
};

inline void to_json(nlohmann::json& j, const ClassificationSummary& s) {
    nlohmann::json predicted = nlohmann::json::object(), correct = nlohmann::json::object();
    for (auto c : kAllCategories) {
        predicted[std::string(category_name(c))] = s.predicted.at(c);
        correct[std::string(category_name(c))] = s.correct.at(c);
    }
    j = nlohmann::json{{"predicted", predicted}, {"correct", correct}, {"total", s.total}, {"total_correct", s.total_correct},
                       {"accuracy", s.accuracy}};
}

inline void to_json(nlohmann::json& j, const MethodStats& m) {
    std::string letters;
    for (const auto& e : m.ordering.entries) letters += category_letter(e.category);
    std::vector<std::string> ids;
    for (const auto& e : m.ordering.entries) ids.push_back(e.poem_id);
    j = nlohmann::json{{"criterion", m.criterion},
                       {"method", scoring_method_name(m.method)},
                       {"responses", m.responses},
                       {"zero_appearances", m.zero_appearances},
                       {"ordering", ids},
                       {"ordering_categories", letters}};
    j["src"] = m.src ? nlohmann::json(*m.src) : nlohmann::json{{"error", m.src_error}};
    j["anova"] = m.anova ? nlohmann::json(*m.anova) : nlohmann::json{{"error", m.anova_error}};
    if (m.icc || !m.icc_error.empty()) j["icc"] = m.icc ? nlohmann::json(*m.icc) : nlohmann::json{{"error", m.icc_error}};
}

inline void to_json(nlohmann::json& j, const StatsReport& r) {
    j = nlohmann::json{{"experiment", experiment_name(r.experiment)},
                       {"complete", r.complete()},
                       {"planned_requests", r.planned_requests},
                       {"failed_requests", r.requests.failed},
                       {"not_attempted", r.requests.not_attempted},
                       {"appearance", r.appearance},
                       {"results", r.results},
                       {"warnings", r.warnings},
                       {"alpha", stats::kBonferroniAlpha}};
    if (r.classification) {
        nlohmann::json c{{"summary", r.classification->summary}};
        c["src"] = r.classification->src ? nlohmann::json(*r.classification->src)
                                         : nlohmann::json{{"error", r.classification->src_error}};
        j["classification"] = c;
    }
}

inline std::string stats_json_text(const StatsReport& r) { return nlohmann::json(r).dump(2) + "\n"; }

inline std::string aggregates_csv(const StatsReport& r, const Corpus& corpus) {
    std::string out = "criterion,method,poem_id,category,appearances,mean_score\n";
    for (const auto& m : r.results)
        for (const auto& a : m.aggregates) {
            const Poem* p = corpus.find(a.poem_id);
            out += text::csv_row({m.criterion, std::string(scoring_method_name(m.method)), a.poem_id,
                                  p ? std::string(category_name(p->category)) : "", std::to_string(a.appearances),
                                  text::format_double(a.mean_score)});
        }
    return out;
}

namespace detail {

template <typename Fn>
std::string capture_error(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

/// Targets x runs score matrix over the batches that produced a response.
inline std::vector<std::vector<double>> score_matrix(const std::vector<ScoreMap>& batches) {
    std::set<std::string> ids;
    for (const auto& b : batches)
        for (const auto& [id, s] : b) ids.insert(id);
    std::vector<std::vector<double>> matrix;
    for (const auto& id : ids) {
        std::vector<double> row;
        for (const auto& b : batches) {
            auto it = b.find(id);
            row.push_back(it == b.end() ? std::numeric_limits<double>::quiet_NaN() : it->second);
        }
        matrix.push_back(std::move(row));
    }
    return matrix;
}

}  // namespace detail

/// Everything reported for a run, computed from stored rows only.
inline StatsReport compute_stats(Experiment experiment, const std::vector<std::string>& criteria,
                                 const std::vector<ScoringMethod>& methods, const BatchPlan& plan, const Corpus& corpus,
                                 const std::vector<RankingRow>& rankings, const std::vector<ClassificationRow>& classifications,
                                 const std::vector<ExchangeRecord>& exchanges) {
    StatsReport report;
    report.experiment = experiment;
    report.appearance = appearance_stats(plan, corpus);

    std::vector<std::string> keys;
    if (experiment == Experiment::Classify) {
        for (const auto& b : plan.batches) keys.push_back(request_key(kClassificationKey, b.batch_id));
    } else {
        for (const auto& c : criteria)
            for (const auto& b : plan.batches) keys.push_back(request_key(c, b.batch_id));
    }
    report.planned_requests = keys.size();
    report.requests = summarize_requests(keys, exchanges);
    for (const auto& f : report.requests.failed) report.warnings.push_back("request failed: " + f);
    if (!report.requests.not_attempted.empty())
        report.warnings.push_back(std::to_string(report.requests.not_attempted.size()) + " requests not attempted");

    if (experiment == Experiment::Classify) {
        std::map<std::string, Category> assignments;
        std::vector<Poem> classified;
        for (const auto& row : classifications) {
            assignments[row.poem_id] = row.predicted;
            const Poem* p = corpus.find(row.poem_id);
            if (!p) throw Error("classification for unknown poem " + row.poem_id);
            classified.push_back(*p);
        }
        ClassificationStats cs;
        const auto sub = Corpus::from_poems(classified);
        cs.summary = summarize_classification(assignments, sub);
        const auto [truth, predicted] = classification_rank_pairs(assignments, sub);
        cs.src_error = detail::capture_error([&, &t = truth, &p = predicted] {
            cs.src = stats::spearman(std::span<const int>(t), std::span<const int>(p));
        });
        if (!cs.src_error.empty()) report.warnings.push_back("classification SRC: " + cs.src_error);
        report.classification = std::move(cs);
        return report;
    }

    const bool want_icc = plan.kind == PlanKind::RepeatedSubset;
    for (const auto& criterion : criteria) {
        // Batches with a stored response, plan order.
        std::map<int, std::vector<const RankingRow*>> by_batch;
        for (const auto& row : rankings)
            if (row.criterion == criterion) by_batch[row.batch_id].push_back(&row);

        for (auto method : methods) {
            MethodStats m;
            m.criterion = criterion;
            m.method = method;
            std::vector<ScoreMap> scored;
            for (const auto& b : plan.batches) {
                auto it = by_batch.find(b.batch_id);
                if (it == by_batch.end()) continue;
                ScoreMap s;
                for (const auto* row : it->second)
                    s[row->poem_id] = method == ScoringMethod::Scale ? row->scale_score : row->rank_score;
                scored.push_back(std::move(s));
            }
            m.responses = static_cast<int>(scored.size());
            const std::string label = criterion + "/" + std::string(scoring_method_name(method));
            if (scored.empty()) {
                m.src_error = m.anova_error = "no successful responses";
                if (want_icc) m.icc_error = m.src_error;
                report.warnings.push_back(label + ": no successful responses");
                report.results.push_back(std::move(m));
                continue;
            }
            auto agg = aggregate(scored, criterion, method, &corpus);
            m.aggregates = std::move(agg.aggregates);
            if (plan.kind != PlanKind::RepeatedSubset) m.zero_appearances = std::move(agg.zero_appearances);
            if (!m.zero_appearances.empty())
                report.warnings.push_back(label + ": " + std::to_string(m.zero_appearances.size()) + " poems never scored");
            m.ordering = order_and_label(m.aggregates, corpus);
            m.src_error = detail::capture_error([&] { m.src = ordering_spearman(m.ordering); });
            m.anova_error = detail::capture_error([&] { m.anova = stats::anova_oneway(group_by_category(m.aggregates, corpus)); });
            if (want_icc) m.icc_error = detail::capture_error([&] { m.icc = stats::icc_k(detail::score_matrix(scored)); });
            for (const auto* err : {&m.src_error, &m.anova_error, &m.icc_error})
                if (!err->empty()) report.warnings.push_back(label + ": " + *err);
            report.results.push_back(std::move(m));
        }
    }
    return report;
}

}  // namespace catbench

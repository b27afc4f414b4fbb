#pragma once

// From validated rankings to per-poem scores, averages and labelled orderings.

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "catbench/corpus.hpp"
#include "catbench/error.hpp"
#include "catbench/parser.hpp"
#include "catbench/stats.hpp"
#include "catbench/text.hpp"

namespace catbench {

enum class ScoringMethod {
    Scale,        ///< the judge's own 1-5 score
    RankDerived,  ///< k - position + 1 for a batch of k
};

constexpr std::string_view scoring_method_name(ScoringMethod m) noexcept {
    return m == ScoringMethod::Scale ? "Scale" : "RankDerived";
}

inline ScoringMethod scoring_method_from_name(std::string_view name) {
    const auto key = text::ascii_lower(name);
    if (key == "scale") return ScoringMethod::Scale;
    if (key == "rankderived" || key == "rank" || key == "n") return ScoringMethod::RankDerived;
    throw Error("unknown scoring method: " + std::string(name));
}

enum class ScoringErrorKind { EmptyInput, MissingAssignment, ForeignPoemId };

using ScoringError = KindedError<ScoringErrorKind>;

using ScoreMap = std::map<std::string, double>;

inline ScoreMap score_ranking(const RankingResponse& response, ScoringMethod method) {
    ScoreMap scores;
    const auto k = static_cast<double>(response.entries.size());
    for (std::size_t i = 0; i < response.entries.size(); ++i) {
        const auto& e = response.entries[i];
        scores[response.resolved_ids.at(i)] =
            method == ScoringMethod::Scale ? static_cast<double>(e.score) : k - static_cast<double>(e.position) + 1.0;
    }
    return scores;
}

struct PoemAggregate {
    std::string poem_id;
    std::string criterion;
    ScoringMethod method = ScoringMethod::RankDerived;
    int appearances = 0;
    double mean_score = 0.0;
    std::vector<double> scores;  ///< one per appearance, batch order
};

struct AggregateResult {
    std::vector<PoemAggregate> aggregates;  ///< ascending poem id
    std::vector<std::string> zero_appearances;  ///< corpus poems never scored
};

/// Averages each poem's scores over the batches it appeared in.
inline AggregateResult aggregate(const std::vector<ScoreMap>& scored_batches, std::string_view criterion,
                                 ScoringMethod method, const Corpus* corpus = nullptr) {
    if (scored_batches.empty()) throw ScoringError(ScoringErrorKind::EmptyInput, "aggregate needs at least one batch");
    std::map<std::string, std::vector<double>> per_poem;
    for (const auto& batch : scored_batches)
        for (const auto& [id, score] : batch) per_poem[id].push_back(score);

    AggregateResult result;
    for (auto& [id, scores] : per_poem) {
        PoemAggregate agg;
        agg.poem_id = id;
        agg.criterion = std::string(criterion);
        agg.method = method;
        agg.appearances = static_cast<int>(scores.size());
        agg.mean_score = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
        agg.scores = std::move(scores);
        result.aggregates.push_back(std::move(agg));
    }
    if (corpus) {
        for (const auto& id : corpus->sorted_ids())
            if (!per_poem.contains(id)) result.zero_appearances.push_back(id);
    }
    return result;
}

struct OrderedEntry {
    std::string poem_id;
    double mean_score = 0.0;
    Category category = Category::Good;
};

struct OrderedSequence {
    std::vector<OrderedEntry> entries;  ///< mean score descending, ties by id ascending
    std::vector<int> category_ranks;
};

inline OrderedSequence order_and_label(const std::vector<PoemAggregate>& aggregates, const Corpus& corpus) {
    if (aggregates.empty()) throw ScoringError(ScoringErrorKind::EmptyInput, "nothing to order");
    OrderedSequence seq;
    for (const auto& a : aggregates) {
        const Poem* poem = corpus.find(a.poem_id);
        if (!poem) throw ScoringError(ScoringErrorKind::ForeignPoemId, "aggregate for unknown poem " + a.poem_id);
        seq.entries.push_back({a.poem_id, a.mean_score, poem->category});
    }
    std::sort(seq.entries.begin(), seq.entries.end(), [](const OrderedEntry& a, const OrderedEntry& b) {
        if (a.mean_score != b.mean_score) return a.mean_score > b.mean_score;
        return a.poem_id < b.poem_id;
    });
    for (const auto& e : seq.entries) seq.category_ranks.push_back(category_rank(e.category));
    return seq;
}

/// Spearman correlation between an ordering's category sequence and the ideal
/// sequence (same categories sorted Good..Bad).
///
/// Poems tied on mean score form a block whose internal order is arbitrary;
/// every position in a block is compared against the block's average ideal
/// rank, so the result does not depend on how ties were displayed. Without
/// ties this is exactly spearman(category_ranks, sorted category_ranks).
inline stats::CorrelationResult ordering_spearman(const OrderedSequence& seq) {
    const auto n = seq.entries.size();
    std::vector<double> observed(seq.category_ranks.begin(), seq.category_ranks.end());
    std::vector<double> ideal(observed);
    std::sort(ideal.begin(), ideal.end());
    std::vector<double> expected(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && seq.entries[j].mean_score == seq.entries[i].mean_score) ++j;
        const double block = std::accumulate(ideal.begin() + static_cast<std::ptrdiff_t>(i),
                                             ideal.begin() + static_cast<std::ptrdiff_t>(j), 0.0) /
                             static_cast<double>(j - i);
        std::fill(expected.begin() + static_cast<std::ptrdiff_t>(i), expected.begin() + static_cast<std::ptrdiff_t>(j), block);
        i = j;
    }
    return stats::spearman(std::span<const double>(observed), std::span<const double>(expected));
}

/// Mean scores grouped Good, Medium, Bad (for the ANOVA).
inline std::vector<std::vector<double>> group_by_category(const std::vector<PoemAggregate>& aggregates, const Corpus& corpus) {
    std::vector<std::vector<double>> groups(3);
    for (const auto& a : aggregates) {
        const Poem* poem = corpus.find(a.poem_id);
        if (!poem) throw ScoringError(ScoringErrorKind::ForeignPoemId, "aggregate for unknown poem " + a.poem_id);
        groups[static_cast<std::size_t>(category_rank(poem->category) - 1)].push_back(a.mean_score);
    }
    return groups;
}

/// (true ranks, predicted ranks) per poem, ascending poem id.
inline std::pair<std::vector<int>, std::vector<int>> classification_rank_pairs(const std::map<std::string, Category>& assignments,
                                                                               const Corpus& corpus) {
    std::pair<std::vector<int>, std::vector<int>> out;
    for (const auto& id : corpus.sorted_ids()) {
        auto it = assignments.find(id);
        if (it == assignments.end()) throw ScoringError(ScoringErrorKind::MissingAssignment, "no category assigned to " + id);
        out.first.push_back(category_rank(corpus.find(id)->category));
        out.second.push_back(category_rank(it->second));
    }
    return out;
}

struct ClassificationSummary {
    std::map<Category, int> predicted;  ///< poems assigned to each category
    std::map<Category, int> correct;    ///< of those, how many truly belong there
    int total = 0;
    int total_correct = 0;
    double accuracy = 0.0;
};

inline ClassificationSummary summarize_classification(const std::map<std::string, Category>& assignments, const Corpus& corpus) {
    ClassificationSummary s;
    for (auto c : kAllCategories) {
        s.predicted[c] = 0;
        s.correct[c] = 0;
    }
    const auto [truth, predicted] = classification_rank_pairs(assignments, corpus);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto p = static_cast<Category>(predicted[i]);
        ++s.predicted[p];
        if (truth[i] == predicted[i]) {
            ++s.correct[p];
            ++s.total_correct;
        }
    }
    s.total = static_cast<int>(truth.size());
    s.accuracy = s.total ? static_cast<double>(s.total_correct) / s.total : 0.0;
    return s;
}

}  // namespace catbench

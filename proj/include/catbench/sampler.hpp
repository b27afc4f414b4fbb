#pragma once

// Seeded batch plans.
//
// Each batch draws from its own RNG substream keyed by (seed, plan kind,
// batch index), so a plan is a pure function of (corpus, params, seed).
// Stratified subsets sample without replacement inside a batch and
// independently across batches; a poem's appearance count is therefore
// Binomial(n_batches, k / category size).

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "catbench/corpus.hpp"
#include "catbench/error.hpp"
#include "catbench/rng.hpp"

namespace catbench {

struct Batch {
    int batch_id = 0;
    std::vector<std::string> poem_ids;  ///< presentation order

    bool operator==(const Batch&) const = default;
};

enum class PlanKind { StratifiedSubsets, FullShuffles, RepeatedSubset, PerItem };

constexpr std::string_view plan_kind_name(PlanKind k) noexcept {
    switch (k) {
        case PlanKind::StratifiedSubsets: return "StratifiedSubsets";
        case PlanKind::FullShuffles: return "FullShuffles";
        case PlanKind::RepeatedSubset: return "RepeatedSubset";
        case PlanKind::PerItem: return "PerItem";
    }
    return "?";
}

struct PlanParams {
    int k_per_category = 0;
    int n_batches = 0;
    int repetitions = 0;

    bool operator==(const PlanParams&) const = default;
};

struct BatchPlan {
    PlanKind kind = PlanKind::StratifiedSubsets;
    std::uint64_t seed = 0;
    PlanParams params;
    std::vector<Batch> batches;

    bool operator==(const BatchPlan&) const = default;
};

enum class SamplerErrorKind { InsufficientCategory, EmptyCorpus, TooFewRepetitions, ForeignPoemId, BadParameter };

using SamplerError = KindedError<SamplerErrorKind>;

struct AppearanceStats {
    int n = 0;         ///< number of batches
    double p = 0.0;    ///< selection probability of one eligible poem per batch
    double mu = 0.0;   ///< n * p
    std::map<std::string, int> counts;  ///< every eligible poem, zeros included
    int min_count = 0;
    int max_count = 0;
    long long total = 0;
};

// ---------------------------------------------------------------------------

inline BatchPlan stratified_subsets(const Corpus& corpus, int k_per_category, int n_batches, std::uint64_t seed) {
    if (k_per_category < 1) throw SamplerError(SamplerErrorKind::BadParameter, "k_per_category must be >= 1");
    if (n_batches < 1) throw SamplerError(SamplerErrorKind::BadParameter, "n_batches must be >= 1");
    std::map<Category, std::vector<std::string>> strata;
    for (auto c : kAllCategories) {
        strata[c] = corpus.ids_in(c);
        const auto available = strata[c].size();
        if (available < static_cast<std::size_t>(k_per_category))
            throw SamplerError(SamplerErrorKind::InsufficientCategory,
                               "category " + std::string(category_name(c)) + " has " + std::to_string(available) +
                                   " poems, " + std::to_string(k_per_category) + " needed");
    }

    BatchPlan plan{PlanKind::StratifiedSubsets, seed, {k_per_category, n_batches, 0}, {}};
    plan.batches.reserve(static_cast<std::size_t>(n_batches));
    const auto k = static_cast<std::size_t>(k_per_category);
    for (int b = 0; b < n_batches; ++b) {
        auto rng = Xoshiro256::substream(seed, plan_kind_name(plan.kind), static_cast<std::uint64_t>(b));
        Batch batch{b, {}};
        batch.poem_ids.reserve(3 * k);
        for (auto c : kAllCategories) {
            auto pool = strata[c];
            // Partial Fisher-Yates: the first k slots become a uniform k-subset.
            for (std::size_t i = 0; i < k; ++i) {
                const auto j = i + static_cast<std::size_t>(rng.uniform_below(pool.size() - i));
                std::swap(pool[i], pool[j]);
                batch.poem_ids.push_back(pool[i]);
            }
        }
        fisher_yates(std::span<std::string>(batch.poem_ids), rng);
        plan.batches.push_back(std::move(batch));
    }
    return plan;
}

inline BatchPlan full_shuffles(const Corpus& corpus, int n_batches, std::uint64_t seed) {
    if (corpus.empty()) throw SamplerError(SamplerErrorKind::EmptyCorpus, "cannot shuffle an empty corpus");
    if (n_batches < 1) throw SamplerError(SamplerErrorKind::BadParameter, "n_batches must be >= 1");
    std::vector<std::string> ids;
    for (const auto& p : corpus.poems()) ids.push_back(p.id);

    BatchPlan plan{PlanKind::FullShuffles, seed, {0, n_batches, 0}, {}};
    for (int b = 0; b < n_batches; ++b) {
        auto rng = Xoshiro256::substream(seed, plan_kind_name(plan.kind), static_cast<std::uint64_t>(b));
        Batch batch{b, ids};
        fisher_yates(std::span<std::string>(batch.poem_ids), rng);
        plan.batches.push_back(std::move(batch));
    }
    return plan;
}

inline BatchPlan repeated_subset(const Batch& source, int repetitions, std::uint64_t seed) {
    if (repetitions < 2)
        throw SamplerError(SamplerErrorKind::TooFewRepetitions, "repetitions must be >= 2, got " + std::to_string(repetitions));
    std::set<std::string> unique(source.poem_ids.begin(), source.poem_ids.end());
    if (unique.size() != source.poem_ids.size())
        throw SamplerError(SamplerErrorKind::BadParameter, "source batch contains duplicate ids");

    BatchPlan plan{PlanKind::RepeatedSubset, seed, {0, repetitions, repetitions}, {}};
    for (int r = 0; r < repetitions; ++r) {
        auto rng = Xoshiro256::substream(seed, plan_kind_name(plan.kind), static_cast<std::uint64_t>(r));
        Batch batch{r, source.poem_ids};
        fisher_yates(std::span<std::string>(batch.poem_ids), rng);
        plan.batches.push_back(std::move(batch));
    }
    return plan;
}

/// One single-poem batch per poem, ascending id (the classification flow).
inline BatchPlan per_item(const Corpus& corpus) {
    BatchPlan plan{PlanKind::PerItem, 0, {0, static_cast<int>(corpus.size()), 0}, {}};
    int b = 0;
    for (const auto& id : corpus.sorted_ids()) plan.batches.push_back(Batch{b++, {id}});
    return plan;
}

inline AppearanceStats appearance_stats(const BatchPlan& plan, const Corpus& corpus) {
    AppearanceStats stats;
    stats.n = static_cast<int>(plan.batches.size());

    std::set<std::string> eligible;
    switch (plan.kind) {
        case PlanKind::StratifiedSubsets:
        case PlanKind::FullShuffles:
        case PlanKind::PerItem:
            for (const auto& p : corpus.poems()) eligible.insert(p.id);
            break;
        case PlanKind::RepeatedSubset:
            for (const auto& b : plan.batches) eligible.insert(b.poem_ids.begin(), b.poem_ids.end());
            break;
    }
    for (const auto& id : eligible) stats.counts[id] = 0;

    for (const auto& batch : plan.batches) {
        for (const auto& id : batch.poem_ids) {
            if (!corpus.contains(id)) throw SamplerError(SamplerErrorKind::ForeignPoemId, "plan refers to unknown poem id: " + id);
            ++stats.counts[id];
            ++stats.total;
        }
    }

    switch (plan.kind) {
        case PlanKind::StratifiedSubsets:
            if (corpus.balanced())
                stats.p = static_cast<double>(plan.params.k_per_category) / static_cast<double>(corpus.count(Category::Good));
            else
                stats.p = 3.0 * plan.params.k_per_category / static_cast<double>(corpus.size());
            break;
        case PlanKind::FullShuffles:
        case PlanKind::RepeatedSubset:
            stats.p = 1.0;
            break;
        case PlanKind::PerItem:
            stats.p = corpus.empty() ? 0.0 : 1.0 / static_cast<double>(corpus.size());
            break;
    }
    stats.mu = stats.n * stats.p;

    if (!stats.counts.empty()) {
        stats.min_count = std::numeric_limits<int>::max();
        stats.max_count = 0;
        for (const auto& [id, c] : stats.counts) {
            stats.min_count = std::min(stats.min_count, c);
            stats.max_count = std::max(stats.max_count, c);
        }
    }
    return stats;
}

// ---------------------------------------------------------------------------
// JSON

inline PlanKind plan_kind_from_name(std::string_view name) {
    for (auto k : {PlanKind::StratifiedSubsets, PlanKind::FullShuffles, PlanKind::RepeatedSubset, PlanKind::PerItem})
        if (plan_kind_name(k) == name) return k;
    throw SamplerError(SamplerErrorKind::BadParameter, "unknown plan kind: " + std::string(name));
}

inline void to_json(nlohmann::json& j, const Batch& b) {
    j = nlohmann::json{{"batch_id", b.batch_id}, {"poem_ids", b.poem_ids}};
}

inline void from_json(const nlohmann::json& j, Batch& b) {
    j.at("batch_id").get_to(b.batch_id);
    j.at("poem_ids").get_to(b.poem_ids);
}

inline void to_json(nlohmann::json& j, const BatchPlan& plan) {
    j = nlohmann::json{{"kind", plan_kind_name(plan.kind)},
                       {"seed", plan.seed},
                       {"params",
                        {{"k_per_category", plan.params.k_per_category},
                         {"n_batches", plan.params.n_batches},
                         {"repetitions", plan.params.repetitions}}},
                       {"batches", plan.batches}};
}

inline void from_json(const nlohmann::json& j, BatchPlan& plan) {
    plan.kind = plan_kind_from_name(j.at("kind").get<std::string>());
    j.at("seed").get_to(plan.seed);
    const auto& p = j.at("params");
    p.at("k_per_category").get_to(plan.params.k_per_category);
    p.at("n_batches").get_to(plan.params.n_batches);
    p.at("repetitions").get_to(plan.params.repetitions);
    j.at("batches").get_to(plan.batches);
}

inline void to_json(nlohmann::json& j, const AppearanceStats& s) {
    j = nlohmann::json{{"n", s.n},         {"p", s.p},         {"mu", s.mu},       {"counts", s.counts},
                       {"min_count", s.min_count}, {"max_count", s.max_count}, {"total", s.total}};
}

inline void from_json(const nlohmann::json& j, AppearanceStats& s) {
    j.at("n").get_to(s.n);
    j.at("p").get_to(s.p);
    j.at("mu").get_to(s.mu);
    j.at("counts").get_to(s.counts);
    j.at("min_count").get_to(s.min_count);
    j.at("max_count").get_to(s.max_count);
    j.at("total").get_to(s.total);
}

}  // namespace catbench

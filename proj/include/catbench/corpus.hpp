#pragma once

// Categorized text corpus with the ordinal encoding Good=1, Medium=2, Bad=3.
//
// On disk a corpus is a directory holding `manifest.csv` with header
// `id,category,author,title,file` and one UTF-8 text file per poem, referenced
// relative to the directory.

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "catbench/error.hpp"
#include "catbench/text.hpp"

namespace catbench {

enum class Category { Good = 1, Medium = 2, Bad = 3 };

inline constexpr std::array<Category, 3> kAllCategories{Category::Good, Category::Medium, Category::Bad};

constexpr int category_rank(Category c) noexcept { return static_cast<int>(c); }

constexpr std::string_view category_name(Category c) noexcept {
    switch (c) {
        case Category::Good: return "Good";
        case Category::Medium: return "Medium";
        case Category::Bad: return "Bad";
    }
    return "?";
}

/// Letter code used in ordering strips (A = Good, B = Medium, C = Bad).
constexpr char category_letter(Category c) noexcept { return static_cast<char>('A' + category_rank(c) - 1); }

inline std::optional<Category> category_from_rank(int rank) noexcept {
    if (rank < 1 || rank > 3) return std::nullopt;
    return static_cast<Category>(rank);
}

/// Case-insensitive label lookup.
inline std::optional<Category> parse_category_label(std::string_view label) {
    const auto key = text::ascii_lower(text::trim(label));
    if (key == "good") return Category::Good;
    if (key == "medium") return Category::Medium;
    if (key == "bad") return Category::Bad;
    return std::nullopt;
}

struct Poem {
    std::string id;
    std::string author;
    std::string title;
    std::string body;
    Category category = Category::Good;

    bool operator==(const Poem&) const = default;
};

enum class CorpusErrorKind { MissingManifest, MissingPoemFile, DuplicateId, DuplicateTitle, UnknownCategory, EmptyBody, BadManifest };

using CorpusError = KindedError<CorpusErrorKind>;

/// Immutable, validated collection of poems in manifest order.
class Corpus {
public:
    Corpus() = default;

    /// Validates ids, author/title keys and bodies; throws CorpusError.
    static Corpus from_poems(std::vector<Poem> poems) {
        Corpus corpus;
        std::set<std::string> keys;
        for (std::size_t i = 0; i < poems.size(); ++i) {
            const auto& p = poems[i];
            if (p.id.empty()) throw CorpusError(CorpusErrorKind::BadManifest, "poem at row " + std::to_string(i + 1) + " has an empty id");
            if (!corpus.index_.emplace(p.id, i).second)
                throw CorpusError(CorpusErrorKind::DuplicateId, "duplicate poem id: " + p.id);
            if (text::trim(p.body).empty()) throw CorpusError(CorpusErrorKind::EmptyBody, "empty body for poem " + p.id);
            if (!keys.insert(match_key(p.author, p.title)).second)
                throw CorpusError(CorpusErrorKind::DuplicateTitle,
                                  "author/title pair not unique after normalization: " + p.author + " - " + p.title);
            ++corpus.counts_[p.category];
        }
        corpus.poems_ = std::move(poems);
        for (auto c : kAllCategories) corpus.counts_.try_emplace(c, 0);
        return corpus;
    }

    /// Key used to match a judge's "author - title" echo back to a poem.
    static std::string match_key(std::string_view author, std::string_view title) {
        return text::normalize_key(author) + '\x1f' + text::normalize_key(title);
    }

    [[nodiscard]] const std::vector<Poem>& poems() const noexcept { return poems_; }
    [[nodiscard]] std::size_t size() const noexcept { return poems_.size(); }
    [[nodiscard]] bool empty() const noexcept { return poems_.empty(); }
    [[nodiscard]] const std::map<Category, std::size_t>& counts() const noexcept { return counts_; }
    [[nodiscard]] std::size_t count(Category c) const { return counts_.at(c); }

    [[nodiscard]] const Poem* find(std::string_view id) const {
        auto it = index_.find(std::string(id));
        return it == index_.end() ? nullptr : &poems_[it->second];
    }

    [[nodiscard]] bool contains(std::string_view id) const { return find(id) != nullptr; }

    /// Ids of one category, manifest order.
    [[nodiscard]] std::vector<std::string> ids_in(Category c) const {
        std::vector<std::string> out;
        for (const auto& p : poems_)
            if (p.category == c) out.push_back(p.id);
        return out;
    }

    /// All ids sorted ascending.
    [[nodiscard]] std::vector<std::string> sorted_ids() const {
        std::vector<std::string> out;
        out.reserve(poems_.size());
        for (const auto& p : poems_) out.push_back(p.id);
        std::sort(out.begin(), out.end());
        return out;
    }

    [[nodiscard]] bool balanced() const {
        return counts_.at(Category::Good) == counts_.at(Category::Medium) &&
               counts_.at(Category::Medium) == counts_.at(Category::Bad);
    }

    bool operator==(const Corpus& other) const { return poems_ == other.poems_; }

private:
    std::vector<Poem> poems_;
    std::map<Category, std::size_t> counts_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Reads `manifest.csv` and the poem files under `root`.
inline Corpus load_corpus(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    const auto manifest_path = root / "manifest.csv";
    if (!fs::is_regular_file(manifest_path))
        throw CorpusError(CorpusErrorKind::MissingManifest, "no manifest.csv in " + root.string());

    const auto rows = text::parse_csv(text::normalize_newlines(text::read_file(manifest_path)));
    if (rows.empty()) throw CorpusError(CorpusErrorKind::BadManifest, "manifest.csv is empty");

    const std::array<std::string_view, 5> expected{"id", "category", "author", "title", "file"};
    std::array<std::size_t, 5> column{};
    for (std::size_t j = 0; j < expected.size(); ++j) {
        auto it = std::find_if(rows[0].begin(), rows[0].end(),
                               [&](const std::string& h) { return text::ascii_lower(text::trim(h)) == expected[j]; });
        if (it == rows[0].end())
            throw CorpusError(CorpusErrorKind::BadManifest, "manifest.csv lacks column '" + std::string(expected[j]) + "'");
        column[j] = static_cast<std::size_t>(it - rows[0].begin());
    }

    std::vector<Poem> poems;
    std::set<std::string> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() == 1 && text::trim(row[0]).empty()) continue;
        if (row.size() < rows[0].size())
            throw CorpusError(CorpusErrorKind::BadManifest, "manifest row " + std::to_string(r + 1) + " has too few fields");
        Poem poem;
        poem.id = std::string(text::trim(row[column[0]]));
        if (!seen.insert(poem.id).second) throw CorpusError(CorpusErrorKind::DuplicateId, "duplicate poem id: " + poem.id);
        const auto label = text::trim(row[column[1]]);
        auto category = parse_category_label(label);
        if (!category) throw CorpusError(CorpusErrorKind::UnknownCategory, "unknown category label: " + std::string(label));
        poem.category = *category;
        poem.author = std::string(text::trim(row[column[2]]));
        poem.title = std::string(text::trim(row[column[3]]));
        const auto file = root / fs::path(std::string(text::trim(row[column[4]])));
        if (!fs::is_regular_file(file))
            throw CorpusError(CorpusErrorKind::MissingPoemFile, "missing poem file for " + poem.id + ": " + file.string());
        poem.body = text::normalize_newlines(text::read_file(file));
        while (!poem.body.empty() && poem.body.back() == '\n') poem.body.pop_back();
        if (text::trim(poem.body).empty()) throw CorpusError(CorpusErrorKind::EmptyBody, "empty body for poem " + poem.id);
        poems.push_back(std::move(poem));
    }
    return Corpus::from_poems(std::move(poems));
}

/// Category rank of every poem, ordered by ascending poem id.
inline std::vector<int> ground_truth_ranks(const Corpus& corpus) {
    std::vector<int> ranks;
    ranks.reserve(corpus.size());
    for (const auto& id : corpus.sorted_ids()) ranks.push_back(category_rank(corpus.find(id)->category));
    return ranks;
}

}  // namespace catbench

#pragma once

// Validation of judge output.
//
// Ranked lists use one entry per line:
//     [position]. [author] - [title] : [score]
// Lines that do not look like entries are ignored. A line that looks like an
// entry but cannot be read is fatal, as is any gap, duplicate, unknown poem,
// score outside 1..5, or score that increases down the list.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "catbench/corpus.hpp"
#include "catbench/error.hpp"
#include "catbench/response.hpp"
#include "catbench/sampler.hpp"
#include "catbench/text.hpp"

namespace catbench {

inline constexpr int kMinScaleScore = 1;
inline constexpr int kMaxScaleScore = 5;

struct RankingEntry {
    int position = 0;
    std::string author;
    std::string title;
    int score = 0;

    bool operator==(const RankingEntry&) const = default;
};

struct RankingResponse {
    std::vector<RankingEntry> entries;
    std::vector<std::string> resolved_ids;  ///< aligned with entries

    [[nodiscard]] std::size_t size() const noexcept { return entries.size(); }
    bool operator==(const RankingResponse&) const = default;
};

enum class ParseErrorKind {
    IncompleteList,
    DuplicateEntry,
    UnknownPoem,
    OutOfRangeScore,
    NonMonotoneScores,
    Refusal,
    Malformed,
    UnknownCategory,
};

constexpr std::string_view parse_error_name(ParseErrorKind k) noexcept {
    switch (k) {
        case ParseErrorKind::IncompleteList: return "IncompleteList";
        case ParseErrorKind::DuplicateEntry: return "DuplicateEntry";
        case ParseErrorKind::UnknownPoem: return "UnknownPoem";
        case ParseErrorKind::OutOfRangeScore: return "OutOfRangeScore";
        case ParseErrorKind::NonMonotoneScores: return "NonMonotoneScores";
        case ParseErrorKind::Refusal: return "Refusal";
        case ParseErrorKind::Malformed: return "Malformed";
        case ParseErrorKind::UnknownCategory: return "UnknownCategory";
    }
    return "?";
}

/// Every kind is retryable.
class ParseError : public KindedError<ParseErrorKind> {
public:
    ParseError(ParseErrorKind kind, std::string detail)
        : KindedError(kind, std::string(parse_error_name(kind)) + ": " + detail), detail_(std::move(detail)) {}

    [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

private:
    std::string detail_;
};

namespace detail {

struct EntryLine {
    int position = 0;
    std::string_view middle;  ///< "author - title" part
    std::string_view score;
};

/// True if `line` has the entry shape "<digits>[.)] ... - ... : ...".
inline bool split_entry_line(std::string_view line, EntryLine& out) {
    line = text::trim(line);
    std::size_t i = 0;
    while (i < line.size() && line[i] >= '0' && line[i] <= '9') ++i;
    if (i == 0 || i > 6 || i >= line.size()) return false;
    if (line[i] != '.' && line[i] != ')') return false;
    const auto digits = line.substr(0, i);
    auto rest = line.substr(i + 1);
    if (rest.empty() || !text::is_space(rest.front())) return false;
    const auto colon = rest.rfind(':');
    if (colon == std::string_view::npos) return false;
    auto middle = text::trim(rest.substr(0, colon));
    if (middle.find(" - ") == std::string_view::npos && middle.find(" – ") == std::string_view::npos &&
        middle.find(" — ") == std::string_view::npos)
        return false;
    long long pos = 0;
    text::parse_int(digits, pos);
    out.position = static_cast<int>(pos);
    out.middle = middle;
    out.score = text::trim(rest.substr(colon + 1));
    return true;
}

/// Candidate (author, title) splits at every spaced dash.
inline std::vector<std::pair<std::string_view, std::string_view>> author_title_splits(std::string_view middle) {
    std::vector<std::pair<std::string_view, std::string_view>> out;
    for (std::string_view sep : {std::string_view(" - "), std::string_view(" – "), std::string_view(" — ")}) {
        std::size_t at = middle.find(sep);
        while (at != std::string_view::npos) {
            out.emplace_back(text::trim(middle.substr(0, at)), text::trim(middle.substr(at + sep.size())));
            at = middle.find(sep, at + 1);
        }
    }
    return out;
}

inline bool looks_like_refusal(std::string_view raw) {
    std::string s = text::ascii_lower(raw);
    for (std::size_t at = s.find("’"); at != std::string::npos; at = s.find("’", at)) s.replace(at, 3, "'");
    for (std::string_view phrase : {"i'm sorry", "i am sorry", "i cannot", "i can't", "i can not", "unable to",
                                    "i'm not able", "i am not able", "i apologize", "i won't", "i will not"})
        if (s.find(phrase) != std::string::npos) return true;
    return false;
}

inline std::string quote(std::string_view line) { return "\"" + std::string(text::trim(line)) + "\""; }

}  // namespace detail

inline RankingResponse parse_ranked_list(const RawResponse& raw, const Batch& batch, const Corpus& corpus) {
    std::map<std::string, std::string> key_to_id;
    for (const auto& id : batch.poem_ids) {
        const Poem* poem = corpus.find(id);
        if (!poem) throw ParseError(ParseErrorKind::UnknownPoem, "batch refers to unknown poem id " + id);
        key_to_id.emplace(Corpus::match_key(poem->author, poem->title), id);
    }

    RankingResponse response;
    std::vector<std::string_view> entry_lines;
    std::set<std::string> seen_ids;
    std::set<int> seen_positions;
    const auto normalized = text::normalize_newlines(raw.text);
    for (auto line : text::split_lines(normalized)) {
        detail::EntryLine parts;
        if (!detail::split_entry_line(line, parts)) continue;

        long long score = 0;
        if (!text::parse_int(parts.score, score))
            throw ParseError(ParseErrorKind::Malformed, "unreadable score in " + detail::quote(line));
        if (score < kMinScaleScore || score > kMaxScaleScore)
            throw ParseError(ParseErrorKind::OutOfRangeScore, "score " + std::to_string(score) + " in " + detail::quote(line));

        std::set<std::string> matches;
        RankingEntry entry{parts.position, {}, {}, static_cast<int>(score)};
        for (auto [author, title] : detail::author_title_splits(parts.middle)) {
            auto it = key_to_id.find(Corpus::match_key(author, title));
            if (it != key_to_id.end() && matches.insert(it->second).second) {
                entry.author = std::string(author);
                entry.title = std::string(title);
            }
        }
        if (matches.size() != 1)
            throw ParseError(ParseErrorKind::UnknownPoem,
                             (matches.empty() ? "no batch poem matches " : "ambiguous match for ") + detail::quote(line));
        const auto& id = *matches.begin();
        if (!seen_ids.insert(id).second) throw ParseError(ParseErrorKind::DuplicateEntry, "poem listed twice at " + detail::quote(line));
        if (!seen_positions.insert(entry.position).second)
            throw ParseError(ParseErrorKind::DuplicateEntry, "position repeated at " + detail::quote(line));

        response.entries.push_back(std::move(entry));
        response.resolved_ids.push_back(id);
        entry_lines.push_back(line);
    }

    if (response.entries.empty()) {
        if (detail::looks_like_refusal(normalized))
            throw ParseError(ParseErrorKind::Refusal, "judge declined the task");
        throw ParseError(ParseErrorKind::Malformed, "no ranking entries found");
    }
    if (response.entries.size() < batch.poem_ids.size()) {
        std::string missing;
        for (const auto& id : batch.poem_ids)
            if (!seen_ids.contains(id)) missing += (missing.empty() ? "" : ", ") + id;
        throw ParseError(ParseErrorKind::IncompleteList, std::to_string(response.entries.size()) + " of " +
                                                             std::to_string(batch.poem_ids.size()) +
                                                             " poems ranked; missing " + missing);
    }
    for (std::size_t i = 0; i < response.entries.size(); ++i) {
        if (response.entries[i].position != static_cast<int>(i) + 1)
            throw ParseError(ParseErrorKind::Malformed,
                             "expected position " + std::to_string(i + 1) + " at " + detail::quote(entry_lines[i]));
        if (i > 0 && response.entries[i].score > response.entries[i - 1].score)
            throw ParseError(ParseErrorKind::NonMonotoneScores, "score rises at " + detail::quote(entry_lines[i]));
    }
    return response;
}

/// Category inside the last complete <category>...</category> span.
inline Category parse_category(const RawResponse& raw) {
    const std::string lower = text::ascii_lower(raw.text);
    constexpr std::string_view open_tag = "<category>";
    constexpr std::string_view close_tag = "</category>";
    std::optional<std::pair<std::size_t, std::size_t>> last;
    for (std::size_t at = lower.find(open_tag); at != std::string::npos; at = lower.find(open_tag, at + 1)) {
        const auto start = at + open_tag.size();
        const auto end = lower.find(close_tag, start);
        if (end == std::string::npos) break;
        // Nested opening tag: the inner one wins.
        if (lower.find(open_tag, start) < end) continue;
        last = {start, end};
    }
    if (!last) throw ParseError(ParseErrorKind::Malformed, "no <category> tags in response");
    auto content = text::trim(std::string_view(raw.text).substr(last->first, last->second - last->first));
    while (!content.empty() && (content.front() == '"' || content.front() == '\'' || content.front() == '*'))
        content.remove_prefix(1);
    while (!content.empty() && (content.back() == '"' || content.back() == '\'' || content.back() == '*' || content.back() == '.'))
        content.remove_suffix(1);
    auto category = parse_category_label(content);
    if (!category) throw ParseError(ParseErrorKind::UnknownCategory, "category tag holds \"" + std::string(content) + "\"");
    return *category;
}

/// Inverse of parse_ranked_list for valid responses.
inline std::string render_ranking(const RankingResponse& response, const Corpus& corpus) {
    std::string out;
    for (std::size_t i = 0; i < response.entries.size(); ++i) {
        const auto& e = response.entries[i];
        std::string author = e.author;
        std::string title = e.title;
        if (i < response.resolved_ids.size()) {
            if (const Poem* poem = corpus.find(response.resolved_ids[i])) {
                author = poem->author;
                title = poem->title;
            }
        }
        out += std::to_string(e.position) + ". " + author + " - " + title + " : " + std::to_string(e.score) + "\n";
    }
    return out;
}

}  // namespace catbench

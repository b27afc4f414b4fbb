#pragma once

// Prompt templates for in-context ranking and single-poem classification.
//
// Templates are plain text with {{name}} placeholders. Substitution is a single
// pass: inserted values are never rescanned, so poem text containing braces is
// inert. The built-in defaults are mirrored by the files in templates/.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "catbench/corpus.hpp"
#include "catbench/error.hpp"
#include "catbench/sampler.hpp"
#include "catbench/text.hpp"

namespace catbench {

struct Criterion {
    std::string name;
    std::string instruction;   ///< "Evaluate the creativity level of each poem"
    std::string anchor_verb;   ///< "being" or "indicating"
    std::string low_anchor;
    std::string high_anchor;
    std::string low_extreme;   ///< item that must receive 1
    std::string high_extreme;  ///< item that must receive 5

    bool operator==(const Criterion&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Criterion, name, instruction, anchor_verb, low_anchor, high_anchor, low_extreme,
                                   high_extreme)

inline const std::vector<Criterion>& builtin_criteria() {
    static const std::vector<Criterion> criteria{
        {"Creativity", "Evaluate the creativity level of each poem", "being", "least creative", "most creative",
         "least creative poem", "most creative poem"},
        {"Quality", "Evaluate the quality of each poem", "being", "lowest quality", "highest quality",
         "lowest quality poem", "highest quality poem"},
        {"Innovativeness", "Evaluate each text based on its innovativeness", "indicating",
         "This poem is like other poems I have seen before", "This poem is not like other poems I have seen before",
         "least innovative poem", "most innovative poem"},
        {"Similarity", "Evaluate each poem based on its similarity to other poems you have read", "indicating",
         "not at all similar", "highly similar", "least similar poem", "most similar poem"},
        {"Poeticness", "Evaluate each text based on its qualification as a poem", "indicating", "this is not a poem",
         "this is definitely a poem", "least poem-like text", "most poem-like text"},
    };
    return criteria;
}

inline constexpr std::string_view kPoemDelimiter = "===========================";

inline constexpr std::string_view kDefaultRankingTemplate =
    "Below is the collection of {{count}} poems. {{instruction}} on the scale from 1 to 5, with 1 {{anchor_verb}} "
    "\"{{low_anchor}}\" and 5 {{anchor_verb}} \"{{high_anchor}}\". Use the whole range of the scale, that is, the "
    "{{low_extreme}} in the collection must have the score of 1, and the {{high_extreme}} in the collection must have "
    "the score of 5. Use only whole integers without any decimal places.\n"
    "\n"
    "Print out the filenames of the poems with their associated scores, ordered from the highest score to the lowest, "
    "in the following format:\n"
    "\n"
    "[position on the list]. [poems author] - [poems title] : [score]\n"
    "\n"
    "below are two example entries:\n"
    "\n"
    "1. Tom Smith - Some Poem : 5\n"
    "\n"
    "2. Jane Jones - My Poem : 4\n"
    "\n"
    "...\n"
    "\n"
    "POEMS:\n"
    "\n"
    "===========================\n"
    "{{poems}}\n";

inline constexpr std::string_view kDefaultClassificationTemplate =
    "You will be evaluating a poem and categorizing it as \"Good\", \"Medium\", or \"Bad\" based on the following "
    "criteria:\n"
    "\n"
    "- \"Good\" poems are those that would be published in the foremost English-language poetry journal globally. "
    "These poems have been subjected to meticulous scrutiny by the magazine's editorial team.\n"
    "\n"
    "- \"Medium\" poems are those that would be published in mid-level poetry magazines offering $5-$10 per poem. "
    "These poems have undergone some degree of editorial review.\n"
    "\n"
    "- \"Bad\" poems are those that would be posted on a website for amateur poets and would receive no positive "
    "feedback. This website does not have any editorial filtration.\n"
    "\n"
    "Here is the poem to evaluate:\n"
    "\n"
    "<poem>\n"
    "{{poem}}\n"
    "</poem>\n"
    "\n"
    "Carefully read the poem and consider which category it belongs to based on the criteria above. Write your "
    "reasoning for the categorization inside <reasoning> tags. Then, output the final category you believe the poem "
    "belongs to inside <category> tags.\n";

enum class PromptMode { RankedList, Classification };

struct PromptText {
    std::string body;
    int expected_item_count = 0;
    PromptMode mode = PromptMode::RankedList;
    std::string criterion;  ///< empty for classification prompts
};

enum class PromptErrorKind { ForeignPoemId, UnsafeBody, UnknownPlaceholder, UnknownCriterion, BadTemplate };

using PromptError = KindedError<PromptErrorKind>;

/// Replaces every {{name}} in `tmpl` with `values[name]`.
inline std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& values) {
    std::string out;
    out.reserve(tmpl.size() * 2);
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const auto open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        const auto close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) throw PromptError(PromptErrorKind::BadTemplate, "unterminated placeholder");
        out.append(tmpl.substr(pos, open - pos));
        const auto name = text::trim(tmpl.substr(open + 2, close - open - 2));
        auto it = values.find(name);
        if (it == values.end())
            throw PromptError(PromptErrorKind::UnknownPlaceholder, "unknown placeholder {{" + std::string(name) + "}}");
        out.append(it->second);
        pos = close + 2;
    }
    return out;
}

/// Editable prompt set: two templates plus the criterion table.
struct PromptTemplates {
    std::string ranking{kDefaultRankingTemplate};
    std::string classification{kDefaultClassificationTemplate};
    std::vector<Criterion> criteria = builtin_criteria();

    static PromptTemplates defaults() { return {}; }

    /// Files missing from `dir` fall back to the defaults.
    static PromptTemplates load(const std::filesystem::path& dir) {
        PromptTemplates t;
        if (std::filesystem::is_regular_file(dir / "ranking.tmpl"))
            t.ranking = text::normalize_newlines(text::read_file(dir / "ranking.tmpl"));
        if (std::filesystem::is_regular_file(dir / "classification.tmpl"))
            t.classification = text::normalize_newlines(text::read_file(dir / "classification.tmpl"));
        if (std::filesystem::is_regular_file(dir / "criteria.json")) {
            try {
                t.criteria = nlohmann::json::parse(text::read_file(dir / "criteria.json")).get<std::vector<Criterion>>();
            } catch (const nlohmann::json::exception& e) {
                throw PromptError(PromptErrorKind::BadTemplate, std::string("criteria.json: ") + e.what());
            }
        }
        return t;
    }

    [[nodiscard]] const Criterion& criterion(std::string_view name) const {
        for (const auto& c : criteria)
            if (text::iequals(c.name, name)) return c;
        throw PromptError(PromptErrorKind::UnknownCriterion, "unknown criterion: " + std::string(name));
    }
};

namespace detail {

inline bool has_delimiter_line(std::string_view body) {
    for (auto line : text::split_lines(body))
        if (text::trim(line) == kPoemDelimiter) return true;
    return false;
}

}  // namespace detail

inline PromptText render_ranking_prompt(const Criterion& criterion, const Batch& batch, const Corpus& corpus,
                                        const PromptTemplates& templates = PromptTemplates::defaults()) {
    std::string poems;
    for (std::size_t i = 0; i < batch.poem_ids.size(); ++i) {
        const Poem* poem = corpus.find(batch.poem_ids[i]);
        if (!poem) throw PromptError(PromptErrorKind::ForeignPoemId, "batch refers to unknown poem id: " + batch.poem_ids[i]);
        if (detail::has_delimiter_line(poem->body))
            throw PromptError(PromptErrorKind::UnsafeBody, "poem " + poem->id + " contains the delimiter line");
        if (i) {
            poems += '\n';
            poems += kPoemDelimiter;
            poems += '\n';
        }
        poems += poem->author + " - " + poem->title + "\n\n" + poem->body + "\n";
    }
    const std::map<std::string, std::string, std::less<>> values{
        {"count", std::to_string(batch.poem_ids.size())},
        {"instruction", criterion.instruction},
        {"anchor_verb", criterion.anchor_verb},
        {"low_anchor", criterion.low_anchor},
        {"high_anchor", criterion.high_anchor},
        {"low_extreme", criterion.low_extreme},
        {"high_extreme", criterion.high_extreme},
        {"criterion", criterion.name},
        {"poems", poems},
    };
    return PromptText{fill_template(templates.ranking, values), static_cast<int>(batch.poem_ids.size()),
                      PromptMode::RankedList, criterion.name};
}

inline PromptText render_classification_prompt(const Poem& poem,
                                               const PromptTemplates& templates = PromptTemplates::defaults()) {
    const auto folded = text::ascii_lower(poem.body);
    if (folded.find("</poem>") != std::string::npos || folded.find("<poem>") != std::string::npos)
        throw PromptError(PromptErrorKind::UnsafeBody, "poem " + poem.id + " contains a <poem> marker");
    const std::map<std::string, std::string, std::less<>> values{{"poem", poem.body}};
    return PromptText{fill_template(templates.classification, values), 1, PromptMode::Classification, {}};
}

}  // namespace catbench

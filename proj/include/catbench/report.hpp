#pragma once

// Static outputs of a run: ordering strips, Markdown summary and CSV tables.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "catbench/analysis.hpp"
#include "catbench/corpus.hpp"
#include "catbench/scoring.hpp"
#include "catbench/text.hpp"

namespace catbench {

enum class StripFormat { Terminal, SVG };

struct StripOptions {
    std::string label;
    bool color = true;  ///< terminal only: ANSI colors instead of letters
    int cell_width = 8;  ///< SVG pixels per poem
};

namespace detail {

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

constexpr std::string_view svg_fill(Category c) noexcept {
    switch (c) {
        case Category::Good: return "#2e7d32";
        case Category::Medium: return "#f9a825";
        case Category::Bad: return "#c62828";
    }
    return "#000000";
}

constexpr std::string_view ansi_color(Category c) noexcept {
    switch (c) {
        case Category::Good: return "\x1b[32m";
        case Category::Medium: return "\x1b[33m";
        case Category::Bad: return "\x1b[31m";
    }
    return "";
}

inline std::string src_annotation(const OrderedSequence& seq) {
    try {
        return text::format_fixed(ordering_spearman(seq).rho, 2);
    } catch (const Error&) {
        return "n/a";
    }
}

inline std::string format_p(double p) {
    if (p == 0.0) return "0";
    if (p >= 0.001) return text::format_fixed(p, 3);
    return text::format_sci(p, 2);
}

inline std::string format_stat(double v, int digits = 2) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return text::format_fixed(v, digits);
}

}  // namespace detail

/// One block per poem, left = highest mean score, colored by true category.
inline std::string emit_ordering_strip(const OrderedSequence& seq, StripFormat format, const StripOptions& options = {}) {
    const auto src = detail::src_annotation(seq);
    if (format == StripFormat::Terminal) {
        std::string out;
        if (!options.label.empty()) out += options.label + "  ";
        for (const auto& e : seq.entries) {
            if (options.color)
                out += std::string(detail::ansi_color(e.category)) + "█\x1b[0m";
            else
                out += category_letter(e.category);
        }
        out += "  SRC " + src + "\n";
        if (options.color) {
            out += "legend: ";
            for (auto c : kAllCategories)
                out += std::string(detail::ansi_color(c)) + "█\x1b[0m " + std::string(category_name(c)) + "  ";
            out += "\n";
        } else {
            out += "legend: A = Good  B = Medium  C = Bad\n";
        }
        return out;
    }

    const int cell = std::max(options.cell_width, 1);
    const int left = 10;
    const int strip_y = options.label.empty() ? 10 : 30;
    const int strip_h = 40;
    const int strip_w = cell * static_cast<int>(seq.entries.size());
    const int width = left + strip_w + 110;
    const int height = strip_y + strip_h + 50;
    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" + std::to_string(height) +
           "\" viewBox=\"0 0 " + std::to_string(width) + " " + std::to_string(height) + "\">\n";
    out += "  <rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) + "\" height=\"" + std::to_string(height) +
           "\" fill=\"#ffffff\"/>\n";
    if (!options.label.empty())
        out += "  <text x=\"" + std::to_string(left) + "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" +
               detail::xml_escape(options.label) + "</text>\n";
    out += "  <g id=\"strip\">\n";
    for (std::size_t i = 0; i < seq.entries.size(); ++i) {
        const auto& e = seq.entries[i];
        out += "    <rect x=\"" + std::to_string(left + cell * static_cast<int>(i)) + "\" y=\"" + std::to_string(strip_y) +
               "\" width=\"" + std::to_string(cell) + "\" height=\"" + std::to_string(strip_h) + "\" fill=\"" +
               std::string(detail::svg_fill(e.category)) + "\"><title>" + detail::xml_escape(e.poem_id) + " " +
               std::string(category_name(e.category)) + " " + text::format_fixed(e.mean_score, 2) + "</title></rect>\n";
    }
    out += "  </g>\n";
    out += "  <text x=\"" + std::to_string(left + strip_w + 10) + "\" y=\"" + std::to_string(strip_y + strip_h / 2 + 5) +
           "\" font-family=\"sans-serif\" font-size=\"14\">SRC " + src + "</text>\n";
    out += "  <g id=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
    int x = left;
    const int legend_y = strip_y + strip_h + 15;
    for (auto c : kAllCategories) {
        out += "    <rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(legend_y) + "\" width=\"12\" height=\"12\" fill=\"" +
               std::string(detail::svg_fill(c)) + "\"/>\n";
        out += "    <text x=\"" + std::to_string(x + 16) + "\" y=\"" + std::to_string(legend_y + 11) + "\">" +
               std::string(category_name(c)) + "</text>\n";
        x += 80;
    }
    out += "  </g>\n</svg>\n";
    return out;
}

/// Ordering of a corpus by true category, ids ascending within a category.
inline OrderedSequence ground_truth_sequence(const Corpus& corpus) {
    std::vector<PoemAggregate> aggs;
    for (const auto& p : corpus.poems())
        aggs.push_back({p.id, "", ScoringMethod::RankDerived, 1, -static_cast<double>(category_rank(p.category)), {}});
    return order_and_label(aggs, corpus);
}

// ---------------------------------------------------------------------------
// Tables

inline std::string src_table_csv(const StatsReport& r) {
    std::string out = "criterion,method,n,rho,t_stat,p_value,significant\n";
    for (const auto& m : r.results) {
        if (!m.src) continue;
        out += text::csv_row({m.criterion, std::string(scoring_method_name(m.method)), std::to_string(m.src->n),
                              text::format_double(m.src->rho), std::isinf(m.src->t_stat) ? (m.src->t_stat > 0 ? "inf" : "-inf") : text::format_double(m.src->t_stat),
                              text::format_double(m.src->p_value), m.src->significant() ? "yes" : "no"});
    }
    return out;
}

inline std::string anova_table_csv(const StatsReport& r) {
    std::string out = "criterion,method,good_mean,medium_mean,bad_mean,F,df_between,df_within,p_value,significant\n";
    for (const auto& m : r.results) {
        if (!m.anova) continue;
        const auto& a = *m.anova;
        out += text::csv_row({m.criterion, std::string(scoring_method_name(m.method)), text::format_double(a.group_means[0]),
                              text::format_double(a.group_means[1]), text::format_double(a.group_means[2]),
                              std::isinf(a.F) ? "inf" : text::format_double(a.F), std::to_string(a.df_between),
                              std::to_string(a.df_within), text::format_double(a.p_value), a.significant() ? "yes" : "no"});
    }
    return out;
}

inline std::string icc_table_csv(const StatsReport& r) {
    std::string out =
        "criterion,method,icc1k,F_icc1,df1_icc1,df2_icc1,p_icc1,icc2k,icc3k,F_icc23,df1_icc23,df2_icc23,p_icc23\n";
    for (const auto& m : r.results) {
        if (!m.icc) continue;
        const auto& i = *m.icc;
        auto num = [](double v) { return std::isinf(v) ? std::string("inf") : text::format_double(v); };
        out += text::csv_row({m.criterion, std::string(scoring_method_name(m.method)), num(i.icc1k), num(i.F_icc1),
                              std::to_string(i.df1_icc1), std::to_string(i.df2_icc1), num(i.p_icc1), num(i.icc2k),
                              num(i.icc3k), num(i.F_icc23), std::to_string(i.df1_icc23), std::to_string(i.df2_icc23),
                              num(i.p_icc23)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Markdown

struct ReportContext {
    std::string title = "Run report";
    std::vector<std::pair<std::string, std::string>> facts;  ///< rendered as a list under the title
};

inline std::string render_report_md(const StatsReport& r, const ReportContext& ctx) {
    using detail::format_p;
    using detail::format_stat;
    std::string out = "# " + ctx.title + "\n\n";
    for (const auto& [k, v] : ctx.facts) out += "- " + k + ": " + v + "\n";
    out += "- status: " + std::string(r.complete() ? "complete" : "INCOMPLETE") + " (" +
           std::to_string(r.planned_requests - r.requests.failed.size() - r.requests.not_attempted.size()) + " of " +
           std::to_string(r.planned_requests) + " requests answered)\n";
    out += "- significance level: " + text::format_fixed(stats::kBonferroniAlpha, 2) + " (Bonferroni-corrected)\n\n";

    const auto& a = r.appearance;
    out += "## Appearances\n\n";
    out += "| batches | p | expected per poem | min | max | total |\n|---|---|---|---|---|---|\n";
    out += "| " + std::to_string(a.n) + " | " + text::format_fixed(a.p, 4) + " | " + text::format_fixed(a.mu, 3) + " | " +
           std::to_string(a.min_count) + " | " + std::to_string(a.max_count) + " | " + std::to_string(a.total) + " |\n\n";

    if (r.classification) {
        const auto& c = *r.classification;
        out += "## Classification\n\n";
        out += "| | Good | Medium | Bad | Total |\n|---|---|---|---|---|\n";
        out += "| predicted | " + std::to_string(c.summary.predicted.at(Category::Good)) + " | " +
               std::to_string(c.summary.predicted.at(Category::Medium)) + " | " +
               std::to_string(c.summary.predicted.at(Category::Bad)) + " | " + std::to_string(c.summary.total) + " |\n";
        out += "| correct | " + std::to_string(c.summary.correct.at(Category::Good)) + " | " +
               std::to_string(c.summary.correct.at(Category::Medium)) + " | " +
               std::to_string(c.summary.correct.at(Category::Bad)) + " | " + std::to_string(c.summary.total_correct) + " |\n\n";
        out += "Accuracy: " + text::format_fixed(100.0 * c.summary.accuracy, 1) + "%\n\n";
        if (c.src)
            out += "SRC (true vs predicted category): " + text::format_fixed(c.src->rho, 2) + ", p = " + format_p(c.src->p_value) +
                   (c.src->significant() ? " *" : "") + "\n\n";
        else
            out += "SRC: n/a (" + c.src_error + ")\n\n";
    }

    if (!r.results.empty()) {
        out += "## Spearman rank correlation\n\n| criterion | method | responses | SRC | p |\n|---|---|---|---|---|\n";
        for (const auto& m : r.results) {
            out += "| " + m.criterion + " | " + std::string(scoring_method_name(m.method)) + " | " + std::to_string(m.responses) + " | ";
            out += m.src ? text::format_fixed(m.src->rho, 2) + " | " + format_p(m.src->p_value) + (m.src->significant() ? " *" : "")
                         : std::string("n/a | ") + m.src_error;
            out += " |\n";
        }
        out += "\n## ANOVA across categories\n\n| criterion | method | Good | Medium | Bad | F | p |\n|---|---|---|---|---|---|---|\n";
        for (const auto& m : r.results) {
            out += "| " + m.criterion + " | " + std::string(scoring_method_name(m.method)) + " | ";
            if (m.anova) {
                const auto& an = *m.anova;
                out += text::format_fixed(an.group_means[0], 2) + " | " + text::format_fixed(an.group_means[1], 2) + " | " +
                       text::format_fixed(an.group_means[2], 2) + " | " + format_stat(an.F) + " | " + format_p(an.p_value) +
                       (an.significant() ? " *" : "");
            } else {
                out += "n/a | | | | " + m.anova_error;
            }
            out += " |\n";
        }
        out += "\n";
        bool any_icc = false;
        for (const auto& m : r.results) any_icc = any_icc || m.icc || !m.icc_error.empty();
        if (any_icc) {
            out += "## Intraclass correlation\n\n| criterion | method | ICC1k | F | df | p | ICC2k | ICC3k | F | df | p |\n"
                   "|---|---|---|---|---|---|---|---|---|---|---|\n";
            for (const auto& m : r.results) {
                out += "| " + m.criterion + " | " + std::string(scoring_method_name(m.method)) + " | ";
                if (m.icc) {
                    const auto& i = *m.icc;
                    out += text::format_fixed(i.icc1k, 3) + " | " + format_stat(i.F_icc1) + " | " + std::to_string(i.df1_icc1) + ", " +
                           std::to_string(i.df2_icc1) + " | " + format_p(i.p_icc1) + " | " + text::format_fixed(i.icc2k, 3) +
                           " | " + text::format_fixed(i.icc3k, 3) + " | " + format_stat(i.F_icc23) + " | " +
                           std::to_string(i.df1_icc23) + ", " + std::to_string(i.df2_icc23) + " | " + format_p(i.p_icc23);
                } else {
                    out += "n/a | | | | | | | | " + m.icc_error;
                }
                out += " |\n";
            }
            out += "\n";
        }
        out += "## Orderings\n\n```\n";
        for (const auto& m : r.results)
            if (!m.ordering.entries.empty())
                out += emit_ordering_strip(m.ordering, StripFormat::Terminal,
                                           {m.criterion + "/" + std::string(scoring_method_name(m.method)), false, 8});
        out += "```\n\n";
    }

    if (!r.warnings.empty()) {
        out += "## Warnings\n\n";
        for (const auto& w : r.warnings) out += "- " + w + "\n";
        out += "\n";
    }
    return out;
}

/// Writes report.md, tables/*.csv and figures/* under `dir`.
inline void export_report(const StatsReport& r, const ReportContext& ctx, const Corpus& corpus, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "tables", ec);
    std::filesystem::create_directories(dir / "figures", ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    text::write_file(dir / "report.md", render_report_md(r, ctx));
    if (!r.results.empty()) {
        text::write_file(dir / "tables" / "src.csv", src_table_csv(r));
        text::write_file(dir / "tables" / "anova.csv", anova_table_csv(r));
        if (std::any_of(r.results.begin(), r.results.end(), [](const MethodStats& m) { return m.icc.has_value(); }))
            text::write_file(dir / "tables" / "icc.csv", icc_table_csv(r));
        if (!corpus.empty()) {
            const auto truth = ground_truth_sequence(corpus);
            text::write_file(dir / "figures" / "ground_truth.svg", emit_ordering_strip(truth, StripFormat::SVG, {"Ground truth", false, 8}));
        }
    }
    for (const auto& m : r.results) {
        if (m.ordering.entries.empty()) continue;
        const auto stem = m.criterion + "_" + std::string(scoring_method_name(m.method));
        const auto label = m.criterion + " (" + std::string(scoring_method_name(m.method)) + ")";
        text::write_file(dir / "figures" / (stem + ".svg"), emit_ordering_strip(m.ordering, StripFormat::SVG, {label, false, 8}));
        text::write_file(dir / "figures" / (stem + ".txt"), emit_ordering_strip(m.ordering, StripFormat::Terminal, {label, false, 8}));
    }
    if (r.classification) {
        const auto& c = r.classification->summary;
        std::string csv = "category,predicted,correct\n";
        for (auto cat : kAllCategories)
            csv += text::csv_row({std::string(category_name(cat)), std::to_string(c.predicted.at(cat)), std::to_string(c.correct.at(cat))});
        csv += text::csv_row({"Total", std::to_string(c.total), std::to_string(c.total_correct)});
        text::write_file(dir / "tables" / "classification.csv", csv);
    }
}

}  // namespace catbench

#pragma once

// Command-line front end. run_cli() is the whole program; main() only forwards
// argv so the tests can drive it in-process.

#include <cstdio>
#include <iostream>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <unistd.h>

#include "catbench/remote_judge.hpp"
#include "catbench/runner.hpp"

namespace catbench::cli {

enum ExitCode : int { kOk = 0, kValidation = 2, kProvider = 3, kIo = 4 };

inline int exit_code_for(FailureClass c) {
    switch (c) {
        case FailureClass::Validation: return kValidation;
        case FailureClass::Provider: return kProvider;
        case FailureClass::Io: return kIo;
    }
    return kValidation;
}

namespace detail {

inline std::vector<std::string> split_list(const std::vector<std::string>& raw) {
    std::vector<std::string> out;
    for (const auto& item : raw) {
        std::size_t start = 0;
        while (start <= item.size()) {
            const auto comma = item.find(',', start);
            const auto piece = text::trim(std::string_view(item).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (!piece.empty()) out.emplace_back(piece);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }
    return out;
}

/// CSV whose first row may be a header: a row is data when every field parses as a number.
inline std::vector<std::vector<std::string>> csv_data_rows(const std::filesystem::path& path) {
    auto rows = text::parse_csv(text::read_file(path));
    if (!rows.empty()) {
        double ignored = 0;
        bool numeric = true;
        for (const auto& f : rows.front()) numeric = numeric && text::parse_double(text::trim(f), ignored);
        if (!numeric) {
            // A header row for the anova layout has a text group column; keep data rows whose last field is numeric.
            const bool header = !text::parse_double(text::trim(rows.front().back()), ignored);
            if (header) rows.erase(rows.begin());
        }
    }
    std::erase_if(rows, [](const auto& r) { return r.size() == 1 && text::trim(r[0]).empty(); });
    return rows;
}

inline double number_field(std::string_view field, const std::filesystem::path& path) {
    double v = 0;
    if (!text::parse_double(text::trim(field), v)) throw Error(path.string() + ": not a number: '" + std::string(field) + "'");
    return v;
}

inline void print_results(const StatsReport& r, std::ostream& out) {
    for (const auto& m : r.results) {
        out << m.criterion << " / " << scoring_method_name(m.method) << ": ";
        if (m.src)
            out << "SRC " << text::format_fixed(m.src->rho, 3) << " (p " << catbench::detail::format_p(m.src->p_value) << ")";
        else
            out << "SRC n/a (" << m.src_error << ")";
        if (m.anova) out << "  ANOVA F " << catbench::detail::format_stat(m.anova->F) << " (p " << catbench::detail::format_p(m.anova->p_value) << ")";
        if (m.icc) out << "  ICC1k " << text::format_fixed(m.icc->icc1k, 3) << " ICC3k " << text::format_fixed(m.icc->icc3k, 3);
        out << "\n";
    }
    if (r.classification) {
        const auto& c = *r.classification;
        out << "Classification: accuracy " << text::format_fixed(100.0 * c.summary.accuracy, 1) << "% (" << c.summary.total_correct << "/"
            << c.summary.total << ")";
        if (c.src) out << ", SRC " << text::format_fixed(c.src->rho, 3);
        out << "\n";
    }
    if (!r.complete()) out << "INCOMPLETE: " << r.requests.failed.size() << " failed, " << r.requests.not_attempted.size() << " not attempted\n";
    for (const auto& w : r.warnings) out << "warning: " << w << "\n";
}

}  // namespace detail

struct Streams {
    std::ostream& out = std::cout;
    std::ostream& err = std::cerr;
};

/// Parses args (without the program name) and runs one subcommand.
inline int run_cli(const std::vector<std::string>& args, Streams io = {}, JudgeFactory factory = make_any_judge) {
    CLI::App app{"catbench: poetry-judging benchmark harness", "catbench"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "validate a corpus directory and summarise it");
    std::string ingest_root;
    bool ingest_json = false;
    ingest->add_option("corpus", ingest_root, "directory holding manifest.csv")->required();
    ingest->add_flag("--json", ingest_json, "print the corpus index as JSON");

    // plan
    auto* plan_cmd = app.add_subcommand("plan", "build a batch plan without running anything");
    std::string plan_corpus, plan_experiment = "RankSubsets", plan_kind, plan_out;
    int plan_k = 0, plan_n = 0, plan_reps = 0;
    std::uint64_t plan_seed = 0;
    plan_cmd->add_option("--corpus", plan_corpus, "corpus directory")->required();
    plan_cmd->add_option("--experiment", plan_experiment, "Classify, RankFull, RankSubsets, Reliability or Custom");
    plan_cmd->add_option("--plan-kind", plan_kind, "Custom only: StratifiedSubsets, FullShuffles, RepeatedSubset, PerItem");
    auto* plan_k_opt = plan_cmd->add_option("--k", plan_k, "poems per category per batch");
    auto* plan_n_opt = plan_cmd->add_option("--n", plan_n, "number of batches");
    auto* plan_reps_opt = plan_cmd->add_option("--repetitions", plan_reps, "repetitions of one subset");
    plan_cmd->add_option("--seed", plan_seed, "plan seed");
    plan_cmd->add_option("-o,--out", plan_out, "write plan JSON here instead of stdout");

    // run
    auto* run = app.add_subcommand("run", "run an experiment and write its artifact directory");
    std::string run_config_file, run_experiment_name = "RankSubsets", run_corpus, run_out, run_provider, run_model, run_base_url, run_plan_kind,
                                 run_mock, run_templates;
    std::vector<std::string> run_criteria, run_methods;
    double run_temperature = 1.0, run_sigma = 0.0;
    int run_retries = 0, run_timeout_ms = 0, run_concurrency = 0, run_k = 0, run_n = 0, run_reps = 0, run_max_tokens = 0;
    std::uint64_t run_seed = 0;
    bool run_live = false, run_overwrite = false, run_quiet = false;
    run->add_option("--config", run_config_file, "config.json to start from (e.g. from an earlier artifact)");
    auto* o_experiment = run->add_option("--experiment", run_experiment_name, "preset: Classify, RankFull, RankSubsets, Reliability, Custom");
    auto* o_corpus = run->add_option("--corpus", run_corpus, "corpus directory");
    run->add_option("-o,--out", run_out, "artifact directory")->required();
    auto* o_criteria = run->add_option("--criteria", run_criteria, "comma-separated criteria");
    auto* o_methods = run->add_option("--methods", run_methods, "comma-separated scoring methods");
    auto* o_provider = run->add_option("--provider", run_provider, "Synthetic, Mock, RemoteA, RemoteB");
    auto* o_model = run->add_option("--model", run_model, "model name");
    auto* o_temperature = run->add_option("--temperature", run_temperature, "sampling temperature");
    auto* o_retries = run->add_option("--max-retries", run_retries, "re-submissions after the first attempt");
    auto* o_timeout = run->add_option("--timeout-ms", run_timeout_ms, "per-request timeout");
    auto* o_concurrency = run->add_option("--max-concurrency", run_concurrency, "parallel requests");
    auto* o_base_url = run->add_option("--base-url", run_base_url, "remote endpoint override");
    auto* o_max_tokens = run->add_option("--max-tokens", run_max_tokens, "remote completion budget");
    auto* o_plan_kind = run->add_option("--plan-kind", run_plan_kind, "Custom only");
    auto* o_k = run->add_option("--k", run_k, "poems per category per batch");
    auto* o_n = run->add_option("--n", run_n, "number of batches");
    auto* o_reps = run->add_option("--repetitions", run_reps, "repetitions");
    auto* o_seed = run->add_option("--seed", run_seed, "run seed");
    auto* o_sigma = run->add_option("--sigma", run_sigma, "synthetic judge noise");
    auto* o_mock = run->add_option("--mock-script", run_mock, "JSON array of scripted replies");
    auto* o_templates = run->add_option("--templates", run_templates, "prompt template directory");
    run->add_flag("--live", run_live, "allow remote providers (costs money, not reproducible)");
    run->add_flag("--overwrite", run_overwrite, "replace an existing artifact directory");
    run->add_flag("-q,--quiet", run_quiet, "no progress output");

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "recompute artifact statistics, or run one kernel on a CSV file");
    std::string stats_artifact, stats_spearman, stats_anova, stats_icc;
    stats_cmd->add_option("artifact", stats_artifact, "artifact directory to verify");
    stats_cmd->add_option("--spearman", stats_spearman, "CSV with two numeric columns x,y");
    stats_cmd->add_option("--anova", stats_anova, "CSV with columns group,value");
    stats_cmd->add_option("--icc", stats_icc, "CSV matrix: one row per target, one column per rater");

    // report
    auto* report_cmd = app.add_subcommand("report", "re-export report.md, tables and figures from an artifact");
    std::string report_artifact, report_out;
    report_cmd->add_option("artifact", report_artifact, "artifact directory")->required();
    report_cmd->add_option("-o,--out", report_out, "destination (default: the artifact itself)");

    // strip
    auto* strip_cmd = app.add_subcommand("strip", "print or write an ordering strip");
    std::string strip_artifact, strip_corpus, strip_criterion = "Quality", strip_method = "RankDerived", strip_svg;
    bool strip_ground = false, strip_plain = false;
    strip_cmd->add_option("artifact", strip_artifact, "artifact directory");
    strip_cmd->add_option("--criterion", strip_criterion, "criterion to draw");
    strip_cmd->add_option("--method", strip_method, "scoring method to draw");
    strip_cmd->add_flag("--ground-truth", strip_ground, "draw the ideal ordering instead");
    strip_cmd->add_option("--corpus", strip_corpus, "corpus directory (with --ground-truth)");
    strip_cmd->add_option("--svg", strip_svg, "write SVG to this file");
    strip_cmd->add_flag("--plain", strip_plain, "letters instead of ANSI colors");

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, io.out, io.err);
        return code == 0 ? kOk : kValidation;
    }

    try {
        if (ingest->parsed()) {
            const auto corpus = load_corpus(ingest_root);
            if (ingest_json) {
                io.out << corpus_index_json(corpus).dump(2) << "\n";
                return kOk;
            }
            io.out << corpus.size() << " poems: " << corpus.count(Category::Good) << " Good, " << corpus.count(Category::Medium) << " Medium, "
                   << corpus.count(Category::Bad) << " Bad\n";
            for (auto c : kAllCategories) {
                io.out << category_name(c) << ":";
                for (const auto& id : corpus.ids_in(c)) io.out << " " << id;
                io.out << "\n";
            }
            const auto g = corpus.count(Category::Good);
            if (corpus.count(Category::Medium) != g || corpus.count(Category::Bad) != g) io.out << "note: categories are unbalanced\n";
            return kOk;
        }

        if (plan_cmd->parsed()) {
            auto config = preset_config(experiment_from_name(plan_experiment));
            if (!plan_kind.empty()) config.plan_kind = plan_kind_from_name(plan_kind);
            if (*plan_k_opt) config.params.k_per_category = plan_k;
            if (*plan_n_opt) config.params.n_batches = plan_n;
            if (*plan_reps_opt) config.params.repetitions = plan_reps;
            config.seed = plan_seed;
            validate_config(config, PromptTemplates::defaults());
            const auto corpus = load_corpus(plan_corpus);
            const auto plan = build_plan(config, corpus);
            nlohmann::json j = plan;
            j["corpus"] = corpus_index_json(corpus);
            const auto doc = j.dump(2) + "\n";
            const auto a = appearance_stats(plan, corpus);
            std::ostream& summary = plan_out.empty() ? io.err : io.out;
            if (plan_out.empty())
                io.out << doc;
            else
                text::write_file(plan_out, doc);
            summary << plan_kind_name(plan.kind) << ": " << plan.batches.size() << " batches, " << a.total << " appearances, mu "
                    << text::format_fixed(a.mu, 3) << ", min " << a.min_count << ", max " << a.max_count << "\n";
            return kOk;
        }

        if (run->parsed()) {
            ExperimentConfig config;
            if (!run_config_file.empty()) {
                try {
                    config = nlohmann::json::parse(text::read_file(run_config_file)).get<ExperimentConfig>();
                } catch (const nlohmann::json::exception& e) {
                    throw Error(run_config_file + ": " + e.what());
                }
                if (*o_experiment) throw Error("--experiment cannot be combined with --config");
            } else {
                config = preset_config(experiment_from_name(run_experiment_name));
            }
            if (*o_corpus) config.corpus_root = run_corpus;
            if (*o_criteria) config.criteria = detail::split_list(run_criteria);
            if (*o_methods) {
                config.methods.clear();
                for (const auto& m : detail::split_list(run_methods)) config.methods.push_back(scoring_method_from_name(m));
            }
            if (*o_provider) config.judge.provider = provider_from_name(run_provider);
            if (*o_model) config.judge.model_name = run_model;
            if (*o_temperature) config.judge.temperature = run_temperature;
            if (*o_retries) config.judge.max_retries = run_retries;
            if (*o_timeout) config.judge.timeout = std::chrono::milliseconds(run_timeout_ms);
            if (*o_concurrency) config.judge.max_concurrency = run_concurrency;
            if (*o_base_url) config.judge.base_url = run_base_url;
            if (*o_max_tokens) config.judge.max_tokens = run_max_tokens;
            if (*o_plan_kind) config.plan_kind = plan_kind_from_name(run_plan_kind);
            if (*o_k) config.params.k_per_category = run_k;
            if (*o_n) config.params.n_batches = run_n;
            if (*o_reps) config.params.repetitions = run_reps;
            if (*o_seed) config.seed = run_seed;
            if (*o_sigma) config.sigma = run_sigma;
            if (*o_mock) config.mock_script = run_mock;
            if (*o_templates) config.templates_dir = run_templates;
            config.output_dir = run_out;
            if (config.corpus_root.empty()) throw Error("--corpus is required");
            if (is_remote(config.judge.provider) && !run_live)
                throw Error(std::string(provider_name(config.judge.provider)) + " calls a paid remote API; pass --live to allow it");

            RunOptions options;
            options.judge_factory = factory;
            options.overwrite = run_overwrite;
            if (!run_quiet && isatty(fileno(stderr)) && &io.err == &std::cerr) {
                options.execute.progress = [&io](std::size_t done, std::size_t total) {
                    if (done == total || done % 25 == 0) io.err << "\r" << done << "/" << total << " requests" << (done == total ? "\n" : "") << std::flush;
                };
            }
            RunArtifact artifact;
            try {
                artifact = run_experiment(config, options);
            } catch (const Error& e) {
                if (std::filesystem::exists(std::filesystem::path(run_out) / "stats.json"))
                    io.err << "partial artifact written to " << run_out << "\n";
                throw;
            }
            detail::print_results(artifact.stats, io.out);
            io.out << "artifact: " << run_out << "\n";
            return artifact.complete() ? kOk : kProvider;
        }

        if (stats_cmd->parsed()) {
            const int kernels = !stats_spearman.empty() + !stats_anova.empty() + !stats_icc.empty();
            if (kernels + !stats_artifact.empty() != 1) throw Error("give exactly one of: an artifact directory, --spearman, --anova, --icc");
            if (!stats_artifact.empty()) {
                const auto a = load_artifact(stats_artifact);
                const bool stats_same = stats_json_text(a.stats) == text::read_file(std::filesystem::path(stats_artifact) / "stats.json");
                const bool aggs_same = aggregates_csv(a.stats, a.corpus) == text::read_file(std::filesystem::path(stats_artifact) / "aggregates.csv");
                detail::print_results(a.stats, io.out);
                io.out << "stats.json: " << (stats_same ? "identical" : "DIFFERS") << "\n";
                io.out << "aggregates.csv: " << (aggs_same ? "identical" : "DIFFERS") << "\n";
                return stats_same && aggs_same ? kOk : kValidation;
            }
            if (!stats_spearman.empty()) {
                std::vector<double> x, y;
                for (const auto& row : detail::csv_data_rows(stats_spearman)) {
                    if (row.size() != 2) throw Error(stats_spearman + ": expected two columns per row");
                    x.push_back(detail::number_field(row[0], stats_spearman));
                    y.push_back(detail::number_field(row[1], stats_spearman));
                }
                io.out << nlohmann::json(stats::spearman(x, y)).dump(2) << "\n";
                return kOk;
            }
            if (!stats_anova.empty()) {
                std::vector<std::string> order;
                std::map<std::string, std::vector<double>> groups;
                for (const auto& row : detail::csv_data_rows(stats_anova)) {
                    if (row.size() != 2) throw Error(stats_anova + ": expected group,value per row");
                    const auto key = std::string(text::trim(row[0]));
                    if (!groups.count(key)) order.push_back(key);
                    groups[key].push_back(detail::number_field(row[1], stats_anova));
                }
                std::vector<std::vector<double>> ordered;
                for (const auto& k : order) ordered.push_back(groups[k]);
                auto j = nlohmann::json(stats::anova_oneway(ordered));
                j["groups"] = order;
                io.out << j.dump(2) << "\n";
                return kOk;
            }
            std::vector<std::vector<double>> matrix;
            for (const auto& row : detail::csv_data_rows(stats_icc)) {
                auto& out_row = matrix.emplace_back();
                for (const auto& f : row) out_row.push_back(detail::number_field(f, stats_icc));
            }
            io.out << nlohmann::json(stats::icc_k(matrix)).dump(2) << "\n";
            return kOk;
        }

        if (report_cmd->parsed()) {
            const auto a = load_artifact(report_artifact);
            const auto dest = report_out.empty() ? std::filesystem::path(report_artifact) : std::filesystem::path(report_out);
            export_report(a.stats, report_context(a), a.corpus, dest);
            io.out << (dest / "report.md").string() << "\n";
            return kOk;
        }

        if (strip_cmd->parsed()) {
            OrderedSequence seq;
            std::string label;
            if (strip_ground) {
                if (strip_corpus.empty() && strip_artifact.empty()) throw Error("--ground-truth needs --corpus or an artifact");
                const auto corpus = strip_corpus.empty() ? load_artifact(strip_artifact).corpus : load_corpus(strip_corpus);
                seq = ground_truth_sequence(corpus);
                label = "GROUND TRUTH";
            } else {
                if (strip_artifact.empty()) throw Error("strip needs an artifact directory or --ground-truth");
                const auto a = load_artifact(strip_artifact);
                const auto method = scoring_method_from_name(strip_method);
                const auto* m = a.stats.find(strip_criterion, method);
                if (!m) throw Error("no results for " + strip_criterion + " / " + std::string(scoring_method_name(method)) + " in " + strip_artifact);
                if (m->ordering.entries.empty()) throw Error("no scored poems for " + strip_criterion);
                seq = m->ordering;
                label = strip_criterion + " (" + std::string(scoring_method_name(method)) + ")";
            }
            if (!strip_svg.empty()) {
                text::write_file(strip_svg, emit_ordering_strip(seq, StripFormat::SVG, {label, false, 8}));
                io.out << strip_svg << "\n";
            } else {
                io.out << emit_ordering_strip(seq, StripFormat::Terminal, {label, !strip_plain, 8});
            }
            return kOk;
        }
    } catch (const Error& e) {
        io.err << "error: " << e.what() << "\n";
        return exit_code_for(e.failure_class());
    } catch (const std::filesystem::filesystem_error& e) {
        io.err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const nlohmann::json::exception& e) {
        io.err << "error: " << e.what() << "\n";
        return kValidation;
    }
    return kValidation;
}

}  // namespace catbench::cli

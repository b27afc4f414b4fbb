// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "catbench/runner.hpp"
#include "golden_matrix.hpp"
#include "test_support.hpp"

using namespace catbench;

namespace {

struct Check {
    bool ok = true;
    std::ostringstream notes;

    void expect(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            notes << " [failed: " << what << "]";
        }
    }
};

int g_failures = 0;

void report(int number, const std::string& name, const std::function<void(Check&)>& body) {
    Check c;
    try {
        body(c);
    } catch (const std::exception& e) {
        c.ok = false;
        c.notes << " [exception: " << e.what() << "]";
    }
    if (!c.ok) ++g_failures;
    std::printf("%s %d %s%s\n", c.ok ? "PASS" : "FAIL", number, name.c_str(), c.notes.str().c_str());
    std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

bool near(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

// Brute-force average ranks, independent of the library.
std::vector<double> oracle_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double less = 0, equal = 0;
        for (double w : v) {
            if (w < v[i]) ++less;
            if (w == v[i]) ++equal;
        }
        r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= n, my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

bool constant(const std::vector<double>& v) {
    for (double w : v)
        if (w != v.front()) return false;
    return true;
}

RunArtifact synthetic_run(const Corpus& corpus, double sigma, std::uint64_t seed) {
    auto config = preset_config(Experiment::RankSubsets);
    config.judge.provider = Provider::Synthetic;
    config.sigma = sigma;
    config.seed = seed;
    SyntheticJudge judge(corpus, sigma, seed);
    return execute_experiment(config, corpus, judge, PromptTemplates::defaults());
}

}  // namespace

int main() {
    const auto corpus = catbench::testing::paper_layout_corpus();

    report(1, "golden ICC matrix", [](Check& c) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto r = stats::icc_k(catbench::testing::golden_rank_matrix());
        const double elapsed = seconds_since(t0);
        c.notes << " F_icc1=" << num(r.F_icc1, 6) << " (" << r.df1_icc1 << "," << r.df2_icc1 << ")"
                << " F_icc23=" << num(r.F_icc23, 6) << " (" << r.df1_icc23 << "," << r.df2_icc23 << ")"
                << " ICC1k=" << num(r.icc1k) << " ICC2k=" << num(r.icc2k) << " ICC3k=" << num(r.icc3k) << " p1=" << num(r.p_icc1, 3)
                << " p23=" << num(r.p_icc23, 3) << " t=" << num(elapsed, 2) << "s";
        c.expect(near(r.F_icc1, 83.53, 0.05), "F_icc1");
        c.expect(near(r.F_icc23, 77.96, 0.05), "F_icc23");
        c.expect(r.df1_icc1 == 14 && r.df2_icc1 == 135, "ICC1 df");
        c.expect(r.df1_icc23 == 14 && r.df2_icc23 == 126, "ICC23 df");
        c.expect(near(r.icc1k, 0.988, 0.005), "ICC1k");
        c.expect(near(r.icc2k, 0.988, 0.005), "ICC2k");
        c.expect(near(r.icc3k, 0.987, 0.005), "ICC3k");
        c.expect(r.p_icc1 < 1e-50 && r.p_icc23 < 1e-50, "p < 1e-50");
        c.expect(elapsed < 1.0, "runtime");
    });

    report(2, "golden row means", [](Check& c) {
        const auto matrix = catbench::testing::golden_rank_matrix();
        const std::vector<std::string> printed{"14.6", "12.7", "12.7", "12.1", "10.7", "9.5", "9.4", "9.3",
                                               "7.5",  "6.0",  "5.5",  "3.6",  "2.3",  "2.3", "1.8"};
        c.expect(matrix.size() == printed.size(), "15 rows");
        std::vector<ScoreMap> batches(matrix.front().size());
        for (std::size_t row = 0; row < matrix.size(); ++row)
            for (std::size_t col = 0; col < batches.size(); ++col)
                batches[col][catbench::testing::poem_id(static_cast<int>(row) + 1)] = matrix[row][col];
        const auto agg = aggregate(batches, "Creativity", ScoringMethod::RankDerived);
        int matched = 0;
        for (std::size_t i = 0; i < printed.size() && i < agg.aggregates.size(); ++i) {
            const auto got = text::format_fixed(agg.aggregates[i].mean_score, 1);
            if (got == printed[i])
                ++matched;
            else
                c.expect(false, "row " + std::to_string(i + 1) + " " + got + " != " + printed[i]);
        }
        c.notes << " " << matched << "/15 rows match";
    });

    report(3, "Spearman p-values at n=90", [](Check& c) {
        const std::vector<std::pair<double, double>> table{{-0.45, 8.59e-06}, {-0.35, 7.21e-04}, {-0.33, 1.32e-03}};
        for (const auto& [rho, expected] : table) {
            const double p = stats::correlation_p_value(rho, 90);
            const double ratio = p / expected;
            c.notes << " rho=" << rho << " p=" << num(p, 3) << " (x" << num(ratio, 3) << ")";
            c.expect(ratio <= 1.5 && ratio >= 1.0 / 1.5, "rho " + num(rho, 2));
        }
    });

    report(4, "statistical oracles", [](Check& c) {
        Xoshiro256 rng(20240601);
        double worst_spearman = 0;
        int vectors = 0;
        while (vectors < 1000) {
            const auto n = 3 + rng.uniform_below(28);  // 3..30; spearman needs n >= 3
            const auto levels = 1 + rng.uniform_below(6);
            std::vector<double> x(n), y(n);
            for (auto& v : x) v = static_cast<double>(rng.uniform_below(levels));
            for (auto& v : y) v = static_cast<double>(rng.uniform_below(levels + 2));
            if (constant(x) || constant(y)) continue;
            ++vectors;
            const double expected = pearson(oracle_ranks(x), oracle_ranks(y));
            worst_spearman = std::max(worst_spearman, std::fabs(stats::spearman(x, y).rho - expected));
        }
        c.notes << " spearman |d|max=" << num(worst_spearman, 3);
        c.expect(worst_spearman < 1e-12, "spearman oracle");

        double worst_ss = 0;
        for (int trial = 0; trial < 1000; ++trial) {
            const auto groups_n = 2 + rng.uniform_below(4);
            std::vector<std::vector<double>> groups(groups_n);
            std::vector<double> all;
            for (auto& g : groups) {
                const auto size = 2 + rng.uniform_below(20);
                for (std::size_t i = 0; i < size; ++i) g.push_back(rng.gaussian() * 3.0 + static_cast<double>(rng.uniform_below(5)));
                all.insert(all.end(), g.begin(), g.end());
            }
            double mean = 0;
            for (double v : all) mean += v;
            mean /= static_cast<double>(all.size());
            double ss_total = 0;
            for (double v : all) ss_total += (v - mean) * (v - mean);
            const auto r = stats::anova_oneway(groups);
            worst_ss = std::max(worst_ss, std::fabs(r.ss_between + r.ss_within - ss_total) / ss_total);
        }
        c.notes << " SS identity rel max=" << num(worst_ss, 3);
        c.expect(worst_ss < 1e-9, "ANOVA SS identity");

        const double sf = stats::f_survival(3.0, 2, 6);
        c.notes << " F(2,6)sf(3)=" << num(sf, 15);
        c.expect(near(sf, 0.125, 1e-10), "F(2,6) survival");
        for (int d : {1, 2, 5, 10}) {
            const double cdf = stats::f_cdf(1.0, d, d);
            c.expect(near(cdf, 0.5, 1e-10), "F(" + std::to_string(d) + "," + std::to_string(d) + ") cdf = " + num(cdf, 15));
        }
    });

    report(5, "stratified sampling", [&](Check& c) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto config = preset_config(Experiment::RankSubsets);
        const auto plan = stratified_subsets(corpus, config.params.k_per_category, config.params.n_batches, config.seed);
        const auto a = appearance_stats(plan, corpus);
        const auto bytes = nlohmann::json(plan).dump();
        const auto again = nlohmann::json(stratified_subsets(corpus, config.params.k_per_category, config.params.n_batches, config.seed)).dump();
        const double elapsed = seconds_since(t0);
        c.notes << " batches=" << plan.batches.size() << " total=" << a.total << " mu=" << text::format_fixed(a.mu, 3) << " min=" << a.min_count
                << " max=" << a.max_count << " t=" << num(elapsed, 2) << "s";
        c.expect(plan.batches.size() == 100, "100 batches");
        bool composition = true;
        for (const auto& b : plan.batches) {
            std::map<Category, int> per;
            for (const auto& id : b.poem_ids) ++per[corpus.find(id)->category];
            composition = composition && per[Category::Good] == 5 && per[Category::Medium] == 5 && per[Category::Bad] == 5;
        }
        c.expect(composition, "5/5/5 composition");
        c.expect(a.total == 1500, "total 1500");
        c.expect(text::format_fixed(a.mu, 3) == "16.667", "mu");
        c.expect(a.min_count >= 6 && a.max_count <= 30, "counts in [6, 30]");
        c.expect(bytes == again, "identical plan bytes");
        c.expect(elapsed < 1.0, "runtime");
    });

    report(6, "noiseless end-to-end", [&](Check& c) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto a = synthetic_run(corpus, 0.0, preset_config(Experiment::RankSubsets).seed);
        const double elapsed = seconds_since(t0);
        c.expect(a.complete(), "run complete");
        c.expect(a.stats.results.size() == 10, "5 criteria x 2 methods");
        int perfect = 0, ordered = 0;
        for (const auto& m : a.stats.results) {
            if (m.src && m.src->rho == 1.0) ++perfect;
            if (m.anova && m.anova->group_means[0] > m.anova->group_means[1] && m.anova->group_means[1] > m.anova->group_means[2]) ++ordered;
        }
        c.notes << " SRC=1 in " << perfect << "/10, ANOVA ordered in " << ordered << "/10, t=" << num(elapsed, 2) << "s";
        c.expect(perfect == 10, "SRC = 1.0");
        c.expect(ordered == 10, "Good > Medium > Bad");
        c.expect(elapsed < 10.0, "runtime");
    });

    report(7, "noise monotonicity", [&](Check& c) {
        std::vector<double> means;
        for (double sigma : {0.5, 2.0, 8.0}) {
            double sum = 0;
            int count = 0;
            for (std::uint64_t seed = 1; seed <= 20; ++seed) {
                const auto a = synthetic_run(corpus, sigma, seed);
                for (const auto& m : a.stats.results)
                    if (m.src) sum += m.src->rho, ++count;
            }
            means.push_back(sum / count);
            c.notes << " sigma=" << sigma << ":" << text::format_fixed(means.back(), 3);
        }
        c.expect(means[0] - means[1] >= 0.05, "0.5 -> 2 margin");
        c.expect(means[1] - means[2] >= 0.05, "2 -> 8 margin");
    });

    report(8, "parser round trip and retry", [&](Check& c) {
        const auto ids = corpus.sorted_ids();
        Xoshiro256 rng(8);
        int identical = 0;
        for (int trial = 0; trial < 1000; ++trial) {
            auto pool = ids;
            fisher_yates(std::span<std::string>(pool), rng);
            pool.resize(1 + rng.uniform_below(pool.size()));
            std::vector<int> scores(pool.size());
            for (auto& s : scores) s = 1 + static_cast<int>(rng.uniform_below(5));
            std::sort(scores.rbegin(), scores.rend());
            RankingResponse r;
            for (std::size_t i = 0; i < pool.size(); ++i) {
                const Poem* p = corpus.find(pool[i]);
                r.entries.push_back({static_cast<int>(i) + 1, p->author, p->title, scores[i]});
                r.resolved_ids.push_back(pool[i]);
            }
            auto shuffled = pool;
            fisher_yates(std::span<std::string>(shuffled), rng);
            const RawResponse raw{render_ranking(r, corpus), 1, "acceptance", ""};
            if (parse_ranked_list(raw, Batch{0, shuffled}, corpus) == r) ++identical;
        }
        c.notes << " round trip " << identical << "/1000";
        c.expect(identical == 1000, "parse . render identity");

        const auto plan = stratified_subsets(corpus, 5, 1, 3);
        const auto& batch = plan.batches.front();
        const auto prompt = render_ranking_prompt(builtin_criteria().front(), batch, corpus);
        SyntheticJudge truth(corpus, 0.0, 0);
        const auto good = truth.complete({&prompt, &batch, 1}).text;
        auto lines = text::split_lines(good);
        std::string incomplete, duplicate;
        for (std::size_t i = 0; i + 1 < lines.size(); ++i) incomplete += std::string(lines[i]) + "\n";
        for (std::size_t i = 0; i + 1 < lines.size(); ++i) duplicate += std::string(lines[i]) + "\n";
        // Position 15 repeats the poem at position 14, so scores stay non-increasing.
        duplicate += "15." + std::string(lines[13]).substr(3) + "\n";
        const std::vector<std::pair<ParseErrorKind, std::string>> cases{
            {ParseErrorKind::IncompleteList, incomplete},
            {ParseErrorKind::DuplicateEntry, duplicate},
            {ParseErrorKind::Refusal, "I'm sorry, but I can't help with ranking these poems."},
        };
        JudgeConfig config;
        config.provider = Provider::Mock;
        config.max_retries = 1;
        for (const auto& [kind, bad] : cases) {
            const auto name = std::string(parse_error_name(kind));
            try {
                parse_ranked_list(RawResponse{bad, 1, "mock", ""}, batch, corpus);
                c.expect(false, name + " accepted");
            } catch (const ParseError& e) {
                c.expect(e.kind() == kind, name + " kind was " + std::string(parse_error_name(e.kind())));
            }
            ScriptedJudge judge({bad, good});
            std::vector<ExchangeRecord> records;
            EvaluateOptions opts;
            opts.batch = &batch;
            opts.on_attempt = [&](const ExchangeRecord& r) { records.push_back(r); };
            const auto raw = evaluate(judge, config, prompt, ranking_validator(batch, corpus), opts);
            const bool one_retry = raw.attempt == 2 && records.size() == 2 && records[0].status == "invalid" &&
                                   records[0].reason.rfind(name + ":", 0) == 0 && records[1].status == "ok" && judge.calls() == 2;
            c.notes << " " << name << (one_retry ? ":1 retry" : ":WRONG");
            c.expect(one_retry, name + " retry");
        }
    });

    std::printf("%s: %d failed\n", g_failures ? "FAIL" : "PASS", g_failures);
    return g_failures ? 1 : 0;
}

#pragma once

// Statistics kernels: tied ranks, Spearman correlation, one-way ANOVA and the
// average-measure intraclass correlations ICC(1,k), ICC(2,k), ICC(3,k)
// (Shrout & Fleiss 1979), with t and F tails computed from the regularized
// incomplete beta function.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "catbench/error.hpp"

namespace catbench::stats {

enum class StatsErrorKind {
    DomainError,
    LengthMismatch,
    DegenerateVariance,
    TooFewSamples,
    TooFewGroups,
    DegenerateWithin,
    MissingCells,
    DegenerateTargets,
};

using StatsError = KindedError<StatsErrorKind>;

/// Significance level applied to every reported p-value (already Bonferroni-corrected).
inline constexpr double kBonferroniAlpha = 0.01;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Special functions

namespace detail {

/// JSON has no infinities; they travel as the strings "inf" / "-inf".
inline nlohmann::json json_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    return v;
}

inline double number_from_json(const nlohmann::json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return kInf;
        if (s == "-inf") return -kInf;
        return std::numeric_limits<double>::quiet_NaN();
    }
    return j.get<double>();
}

inline double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

/// Continued fraction for I_x(a,b), modified Lentz. Converges quickly for x < (a+1)/(a+b+2).
inline double beta_continued_fraction(double x, double a, double b) {
    constexpr int kMaxIter = 20'000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace detail

/// {I_x(a,b), 1 - I_x(a,b)}, each side evaluated without cancellation where it
/// is the small one.
inline std::pair<double, double> incomplete_beta_pair(double x, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
        throw StatsError(StatsErrorKind::DomainError, "incomplete beta needs a > 0 and b > 0");
    if (!(x >= 0.0 && x <= 1.0)) throw StatsError(StatsErrorKind::DomainError, "incomplete beta needs 0 <= x <= 1");
    if (x == 0.0) return {0.0, 1.0};
    if (x == 1.0) return {1.0, 0.0};
    const double log_front = a * std::log(x) + b * std::log1p(-x) - detail::log_beta(a, b);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        const double lower = std::exp(log_front) * detail::beta_continued_fraction(x, a, b) / a;
        return {lower, 1.0 - lower};
    }
    const double upper = std::exp(log_front) * detail::beta_continued_fraction(1.0 - x, b, a) / b;
    return {1.0 - upper, upper};
}

/// Regularized incomplete beta I_x(a, b).
inline double regularized_incomplete_beta(double x, double a, double b) { return incomplete_beta_pair(x, a, b).first; }

/// P(F > f) for F ~ F(d1, d2).
inline double f_survival(double f, double d1, double d2) {
    if (std::isinf(f) && f > 0) return 0.0;
    if (!(f > 0.0)) return 1.0;
    return incomplete_beta_pair(d2 / (d2 + d1 * f), d2 / 2.0, d1 / 2.0).first;
}

/// P(F <= f) for F ~ F(d1, d2), evaluated on the mirrored beta argument.
inline double f_cdf(double f, double d1, double d2) {
    if (std::isinf(f) && f > 0) return 1.0;
    if (!(f > 0.0)) return 0.0;
    return incomplete_beta_pair(d1 * f / (d1 * f + d2), d1 / 2.0, d2 / 2.0).first;
}

/// Two-sided P(|T| >= |t|) for Student's t with df degrees of freedom.
inline double t_two_sided(double t, double df) {
    if (std::isinf(t)) return 0.0;
    return incomplete_beta_pair(df / (df + t * t), df / 2.0, 0.5).first;
}

// ---------------------------------------------------------------------------
// Ranks and correlation

/// Fractional ranks (1-based); tied values share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> values) {
    if (values.empty()) throw StatsError(StatsErrorKind::TooFewSamples, "average_ranks needs at least one value");
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i + 1;
        while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
        // Positions i+1 .. j share their mean.
        const double shared = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) ranks[order[t]] = shared;
        i = j;
    }
    return ranks;
}

inline std::vector<double> average_ranks(std::span<const int> values) {
    std::vector<double> as_double(values.begin(), values.end());
    return average_ranks(std::span<const double>(as_double));
}

struct CorrelationResult {
    double rho = 0.0;
    std::size_t n = 0;
    double t_stat = 0.0;
    double p_value = 1.0;

    [[nodiscard]] bool significant(double alpha = kBonferroniAlpha) const { return p_value < alpha; }
};

inline void to_json(nlohmann::json& j, const CorrelationResult& r) {
    j = nlohmann::json{{"rho", detail::json_number(r.rho)},
                       {"n", r.n},
                       {"t_stat", detail::json_number(r.t_stat)},
                       {"p_value", detail::json_number(r.p_value)}};
}

inline void from_json(const nlohmann::json& j, CorrelationResult& r) {
    r.rho = detail::number_from_json(j.at("rho"));
    r.n = j.at("n").get<std::size_t>();
    r.t_stat = detail::number_from_json(j.at("t_stat"));
    r.p_value = detail::number_from_json(j.at("p_value"));
}

/// Spearman's rho as the Pearson correlation of average ranks, with a
/// two-sided t test on n - 2 degrees of freedom. |rho| = 1 gives p = 0.
inline CorrelationResult spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw StatsError(StatsErrorKind::LengthMismatch,
                         "spearman inputs differ in length: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
    const std::size_t n = x.size();
    if (n < 3) throw StatsError(StatsErrorKind::TooFewSamples, "spearman needs n >= 3, got " + std::to_string(n));
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double mean = (static_cast<double>(n) + 1.0) / 2.0;  // mean of any rank vector
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = rx[i] - mean;
        const double dy = ry[i] - mean;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw StatsError(StatsErrorKind::DegenerateVariance, "spearman input is constant after ranking");

    CorrelationResult r;
    r.n = n;
    r.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    if (rx == ry) r.rho = 1.0;
    if (std::abs(r.rho) > 1.0 - 4 * std::numeric_limits<double>::epsilon()) r.rho = std::copysign(1.0, r.rho);
    const double df = static_cast<double>(n) - 2.0;
    if (std::abs(r.rho) == 1.0) {
        r.t_stat = std::copysign(kInf, r.rho);
        r.p_value = 0.0;
    } else {
        r.t_stat = r.rho * std::sqrt(df / (1.0 - r.rho * r.rho));
        r.p_value = std::clamp(t_two_sided(r.t_stat, df), 0.0, 1.0);
    }
    return r;
}

inline CorrelationResult spearman(std::span<const int> x, std::span<const int> y) {
    std::vector<double> dx(x.begin(), x.end());
    std::vector<double> dy(y.begin(), y.end());
    return spearman(std::span<const double>(dx), std::span<const double>(dy));
}

/// p-value of a correlation coefficient under the t approximation.
inline double correlation_p_value(double rho, std::size_t n) {
    const double df = static_cast<double>(n) - 2.0;
    if (std::abs(rho) >= 1.0) return 0.0;
    return t_two_sided(rho * std::sqrt(df / (1.0 - rho * rho)), df);
}

// ---------------------------------------------------------------------------
// One-way ANOVA

struct AnovaResult {
    std::vector<double> group_means;
    double F = 0.0;
    int df_between = 0;
    int df_within = 0;
    double p_value = 1.0;
    double ss_between = 0.0;
    double ss_within = 0.0;
    double ss_total = 0.0;

    [[nodiscard]] bool significant(double alpha = kBonferroniAlpha) const { return p_value < alpha; }
};

inline void to_json(nlohmann::json& j, const AnovaResult& r) {
    j = nlohmann::json{{"group_means", r.group_means},
                       {"F", detail::json_number(r.F)},
                       {"df_between", r.df_between},
                       {"df_within", r.df_within},
                       {"p_value", detail::json_number(r.p_value)},
                       {"ss_between", r.ss_between},
                       {"ss_within", r.ss_within},
                       {"ss_total", r.ss_total}};
}

inline void from_json(const nlohmann::json& j, AnovaResult& r) {
    j.at("group_means").get_to(r.group_means);
    r.F = detail::number_from_json(j.at("F"));
    j.at("df_between").get_to(r.df_between);
    j.at("df_within").get_to(r.df_within);
    r.p_value = detail::number_from_json(j.at("p_value"));
    j.at("ss_between").get_to(r.ss_between);
    j.at("ss_within").get_to(r.ss_within);
    j.at("ss_total").get_to(r.ss_total);
}

/// Zero within-group variance with distinct means yields F = +inf, p = 0.
inline AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw StatsError(StatsErrorKind::TooFewGroups, "ANOVA needs at least two groups");
    std::size_t total_n = 0;
    double grand_sum = 0.0;
    AnovaResult r;
    for (const auto& g : groups) {
        if (g.size() < 2) throw StatsError(StatsErrorKind::TooFewSamples, "every ANOVA group needs at least two values");
        const double sum = std::accumulate(g.begin(), g.end(), 0.0);
        r.group_means.push_back(sum / static_cast<double>(g.size()));
        total_n += g.size();
        grand_sum += sum;
    }
    const double grand = grand_sum / static_cast<double>(total_n);
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& g = groups[gi];
        const double dm = r.group_means[gi] - grand;
        r.ss_between += static_cast<double>(g.size()) * dm * dm;
        for (double v : g) {
            r.ss_within += (v - r.group_means[gi]) * (v - r.group_means[gi]);
            r.ss_total += (v - grand) * (v - grand);
        }
    }
    r.df_between = static_cast<int>(groups.size()) - 1;
    r.df_within = static_cast<int>(total_n - groups.size());
    const double ms_between = r.ss_between / r.df_between;
    const double ms_within = r.ss_within / r.df_within;
    // Treat round-off sized residue as exact zero.
    const double scale = std::max(r.ss_total, 1e-300);
    if (r.ss_within <= 1e-14 * scale || r.ss_within == 0.0) {
        if (r.ss_between <= 1e-14 * scale)
            throw StatsError(StatsErrorKind::DegenerateWithin, "ANOVA input has no variance at all");
        r.F = kInf;
        r.p_value = 0.0;
        return r;
    }
    r.F = ms_between / ms_within;
    r.p_value = std::clamp(f_survival(r.F, r.df_between, r.df_within), 0.0, 1.0);
    return r;
}

// ---------------------------------------------------------------------------
// Intraclass correlation

struct IccResult {
    int n_targets = 0;
    int k_raters = 0;
    double icc1k = 0.0;
    double icc2k = 0.0;
    double icc3k = 0.0;
    double F_icc1 = 0.0;
    int df1_icc1 = 0;  ///< n - 1
    int df2_icc1 = 0;  ///< n (k - 1)
    double p_icc1 = 1.0;
    double F_icc23 = 0.0;
    int df1_icc23 = 0;  ///< n - 1
    int df2_icc23 = 0;  ///< (n - 1)(k - 1)
    double p_icc23 = 1.0;
    double ms_between_targets = 0.0;
    double ms_within = 0.0;
    double ms_between_raters = 0.0;
    double ms_error = 0.0;
    double ss_between_targets = 0.0;
    double ss_between_raters = 0.0;
    double ss_error = 0.0;
    double ss_total = 0.0;
};

inline void to_json(nlohmann::json& j, const IccResult& r) {
    j = nlohmann::json{{"n_targets", r.n_targets},
                       {"k_raters", r.k_raters},
                       {"icc1k", r.icc1k},
                       {"icc2k", r.icc2k},
                       {"icc3k", r.icc3k},
                       {"F_icc1", detail::json_number(r.F_icc1)},
                       {"df1_icc1", r.df1_icc1},
                       {"df2_icc1", r.df2_icc1},
                       {"p_icc1", r.p_icc1},
                       {"F_icc23", detail::json_number(r.F_icc23)},
                       {"df1_icc23", r.df1_icc23},
                       {"df2_icc23", r.df2_icc23},
                       {"p_icc23", r.p_icc23},
                       {"ms_between_targets", r.ms_between_targets},
                       {"ms_within", r.ms_within},
                       {"ms_between_raters", r.ms_between_raters},
                       {"ms_error", r.ms_error},
                       {"ss_between_targets", r.ss_between_targets},
                       {"ss_between_raters", r.ss_between_raters},
                       {"ss_error", r.ss_error},
                       {"ss_total", r.ss_total}};
}

/// Average-measure ICCs over an n_targets x k_raters matrix (rows = targets).
inline IccResult icc_k(const std::vector<std::vector<double>>& matrix) {
    const std::size_t n = matrix.size();
    if (n < 2) throw StatsError(StatsErrorKind::TooFewSamples, "ICC needs at least two targets");
    const std::size_t k = matrix.front().size();
    if (k < 2) throw StatsError(StatsErrorKind::TooFewSamples, "ICC needs at least two raters");
    for (const auto& row : matrix) {
        if (row.size() != k) throw StatsError(StatsErrorKind::MissingCells, "ICC matrix rows differ in length");
        for (double v : row)
            if (!std::isfinite(v)) throw StatsError(StatsErrorKind::MissingCells, "ICC matrix has a missing cell");
    }

    std::vector<double> row_mean(n, 0.0), col_mean(k, 0.0);
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            row_mean[i] += matrix[i][j];
            col_mean[j] += matrix[i][j];
            grand += matrix[i][j];
        }
    for (auto& m : row_mean) m /= static_cast<double>(k);
    for (auto& m : col_mean) m /= static_cast<double>(n);
    grand /= static_cast<double>(n * k);

    IccResult r;
    r.n_targets = static_cast<int>(n);
    r.k_raters = static_cast<int>(k);
    for (std::size_t i = 0; i < n; ++i) r.ss_between_targets += (row_mean[i] - grand) * (row_mean[i] - grand);
    r.ss_between_targets *= static_cast<double>(k);
    for (std::size_t j = 0; j < k; ++j) r.ss_between_raters += (col_mean[j] - grand) * (col_mean[j] - grand);
    r.ss_between_raters *= static_cast<double>(n);
    double ss_within = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const double x = matrix[i][j];
            r.ss_total += (x - grand) * (x - grand);
            ss_within += (x - row_mean[i]) * (x - row_mean[i]);
            const double resid = x - row_mean[i] - col_mean[j] + grand;
            r.ss_error += resid * resid;
        }

    const double dn = static_cast<double>(n);
    const double dk = static_cast<double>(k);
    r.df1_icc1 = static_cast<int>(n - 1);
    r.df2_icc1 = static_cast<int>(n * (k - 1));
    r.df1_icc23 = static_cast<int>(n - 1);
    r.df2_icc23 = static_cast<int>((n - 1) * (k - 1));
    r.ms_between_targets = r.ss_between_targets / (dn - 1.0);
    r.ms_within = ss_within / (dn * (dk - 1.0));
    r.ms_between_raters = r.ss_between_raters / (dk - 1.0);
    r.ms_error = r.ss_error / ((dn - 1.0) * (dk - 1.0));

    const double floor = 1e-14 * std::max(r.ss_total, 1e-300);
    if (r.ss_between_targets <= floor)
        throw StatsError(StatsErrorKind::DegenerateTargets, "ICC targets do not differ (between-target mean square is 0)");
    if (ss_within <= floor) r.ms_within = 0.0;
    if (r.ss_error <= floor) r.ms_error = 0.0;

    const double msb = r.ms_between_targets;
    r.icc1k = (msb - r.ms_within) / msb;
    r.icc3k = (msb - r.ms_error) / msb;
    r.icc2k = (msb - r.ms_error) / (msb + (r.ms_between_raters - r.ms_error) / dn);
    r.F_icc1 = r.ms_within == 0.0 ? kInf : msb / r.ms_within;
    r.F_icc23 = r.ms_error == 0.0 ? kInf : msb / r.ms_error;
    r.p_icc1 = std::clamp(f_survival(r.F_icc1, r.df1_icc1, r.df2_icc1), 0.0, 1.0);
    r.p_icc23 = std::clamp(f_survival(r.F_icc23, r.df1_icc23, r.df2_icc23), 0.0, 1.0);
    return r;
}

}  // namespace catbench::stats

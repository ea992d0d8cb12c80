#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace anonpsy::stats {

enum class Alternative { two_sided, less, greater };
std::string_view to_string(Alternative alt);

struct WilcoxonResult {
    double w_plus = 0.0;
    double w_minus = 0.0;
    /// min(W+, W-) for two-sided tests, W+ otherwise.
    double statistic = 0.0;
    double p = 1.0;
    std::size_t n = 0;  // after dropping zero differences
    bool exact = true;
    bool degenerate = false;  // every difference was zero
};

/// Signed-rank test on differences. Zero differences are dropped and tied magnitudes get mid-ranks.
/// Exact null distribution for n <= 25, normal approximation with tie and continuity correction above.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& differences, Alternative alt = Alternative::two_sided);
/// Differences a - b.
WilcoxonResult wilcoxon_signed_rank(const std::vector<std::pair<double, double>>& pairs,
                                    Alternative alt = Alternative::two_sided);

struct MannWhitneyResult {
    double u = 0.0;  // U of the first sample
    double p = 1.0;
    bool exact = true;
};

/// Exact when there are no ties and n1 + n2 <= 40, normal approximation otherwise.
MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b,
                                 Alternative alt = Alternative::two_sided);

/// Exact binomial test. The two-sided p sums outcomes no more likely than k.
double binomial_test(std::int64_t k, std::int64_t n, double p0, Alternative alt = Alternative::two_sided);

/// Exact McNemar test on the discordant counts.
double mcnemar(std::int64_t b, std::int64_t c);

struct ChiSquareResult {
    double statistic = 0.0;
    double df = 0.0;
    double p = 1.0;
};

/// Rows are subjects, columns conditions.
ChiSquareResult cochran_q(const std::vector<std::vector<bool>>& table);
ChiSquareResult friedman(const std::vector<std::vector<double>>& table);

/// Holm step-down adjustment, returned in input order.
std::vector<double> holm_correct(const std::vector<double>& pvals);

/// Upper tail of the chi-square distribution.
double chi_square_sf(double x, double df);

/// Mid-ranks (1-based) of `values`.
std::vector<double> rank_average(const std::vector<double>& values);

}  // namespace anonpsy::stats

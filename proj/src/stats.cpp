#include "anonpsy/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "anonpsy/error.hpp"

namespace anonpsy::stats {

namespace {

constexpr std::size_t kExactWilcoxonLimit = 25;
constexpr std::size_t kExactMannWhitneyLimit = 40;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double tail_p(double z_upper, double z_lower, Alternative alt) {
    switch (alt) {
        case Alternative::greater: return 1.0 - normal_cdf(z_upper);
        case Alternative::less: return normal_cdf(z_lower);
        case Alternative::two_sided: break;
    }
    return std::min(1.0, 2.0 * std::min(1.0 - normal_cdf(z_upper), normal_cdf(z_lower)));
}

double tie_term(const std::vector<double>& values) {
    std::map<double, int> counts;
    for (double v : values) ++counts[v];
    double sum = 0.0;
    for (const auto& [_, t] : counts) sum += static_cast<double>(t) * t * t - t;
    return sum;
}

double log_binom_pmf(std::int64_t k, std::int64_t n, double p) {
    if (p == 0.0) return k == 0 ? 0.0 : -INFINITY;
    if (p == 1.0) return k == n ? 0.0 : -INFINITY;
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
           (n - k) * std::log1p(-p);
}

}  // namespace

std::string_view to_string(Alternative alt) {
    switch (alt) {
        case Alternative::two_sided: return "two-sided";
        case Alternative::less: return "less";
        case Alternative::greater: return "greater";
    }
    return "two-sided";
}

std::vector<double> rank_average(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
        i = j + 1;
    }
    return ranks;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& differences, Alternative alt) {
    if (differences.empty()) throw Error("wilcoxon_signed_rank: no observations");
    std::vector<double> d;
    for (double x : differences)
        if (x != 0.0) d.push_back(x);
    WilcoxonResult r;
    r.n = d.size();
    if (d.empty()) {
        r.degenerate = true;
        return r;
    }
    std::vector<double> mags(d.size());
    std::transform(d.begin(), d.end(), mags.begin(), [](double x) { return std::fabs(x); });
    const auto ranks = rank_average(mags);
    for (std::size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? r.w_plus : r.w_minus) += ranks[i];
    r.statistic = alt == Alternative::two_sided ? std::min(r.w_plus, r.w_minus) : r.w_plus;

    const std::size_t n = d.size();
    if (n <= kExactWilcoxonLimit) {
        // Doubled ranks are integers even with mid-ranks.
        std::vector<std::int64_t> twice(n);
        std::int64_t total = 0;
        for (std::size_t i = 0; i < n; ++i) total += twice[i] = std::llround(2.0 * ranks[i]);
        std::vector<std::uint64_t> count(static_cast<std::size_t>(total) + 1, 0);
        count[0] = 1;
        for (auto w : twice)
            for (std::int64_t s = total; s >= w; --s) count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - w)];
        const auto observed = std::llround(2.0 * r.w_plus);
        std::uint64_t le = 0;
        std::uint64_t ge = 0;
        for (std::int64_t s = 0; s <= total; ++s) {
            if (s <= observed) le += count[static_cast<std::size_t>(s)];
            if (s >= observed) ge += count[static_cast<std::size_t>(s)];
        }
        const double denom = std::ldexp(1.0, static_cast<int>(n));
        const double p_le = static_cast<double>(le) / denom;
        const double p_ge = static_cast<double>(ge) / denom;
        switch (alt) {
            case Alternative::greater: r.p = p_ge; break;
            case Alternative::less: r.p = p_le; break;
            case Alternative::two_sided: r.p = std::min(1.0, 2.0 * std::min(p_le, p_ge)); break;
        }
        return r;
    }
    r.exact = false;
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term(mags) / 48.0;
    const double sd = std::sqrt(var);
    if (sd == 0.0) return r;
    r.p = tail_p((r.w_plus - mean - 0.5) / sd, (r.w_plus - mean + 0.5) / sd, alt);
    return r;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<std::pair<double, double>>& pairs, Alternative alt) {
    std::vector<double> d;
    d.reserve(pairs.size());
    for (const auto& [a, b] : pairs) d.push_back(a - b);
    return wilcoxon_signed_rank(d, alt);
}

MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b, Alternative alt) {
    if (a.empty() || b.empty()) throw Error("mann_whitney_u: empty sample");
    std::vector<double> all(a);
    all.insert(all.end(), b.begin(), b.end());
    const auto ranks = rank_average(all);
    const double n1 = static_cast<double>(a.size());
    const double n2 = static_cast<double>(b.size());
    double r1 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) r1 += ranks[i];
    MannWhitneyResult r;
    r.u = r1 - n1 * (n1 + 1.0) / 2.0;
    const double ties = tie_term(all);

    if (ties == 0.0 && all.size() <= kExactMannWhitneyLimit) {
        // count[i][j][u]: arrangements of i first-sample and j second-sample values with statistic u.
        const auto m = a.size();
        const auto k = b.size();
        const std::size_t umax = m * k;
        std::vector<std::vector<double>> prev(k + 1, std::vector<double>(umax + 1, 0.0));
        for (std::size_t j = 0; j <= k; ++j) prev[j][0] = 1.0;
        for (std::size_t i = 1; i <= m; ++i) {
            std::vector<std::vector<double>> cur(k + 1, std::vector<double>(umax + 1, 0.0));
            cur[0][0] = 1.0;
            for (std::size_t j = 1; j <= k; ++j)
                for (std::size_t u = 0; u <= i * j; ++u)
                    cur[j][u] = (u >= j ? prev[j][u - j] : 0.0) + cur[j - 1][u];
            prev = std::move(cur);
        }
        const auto& dist = prev[k];
        const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
        const auto observed = static_cast<std::size_t>(std::llround(r.u));
        double le = 0.0;
        double ge = 0.0;
        for (std::size_t u = 0; u <= umax; ++u) {
            if (u <= observed) le += dist[u];
            if (u >= observed) ge += dist[u];
        }
        switch (alt) {
            case Alternative::greater: r.p = ge / total; break;
            case Alternative::less: r.p = le / total; break;
            case Alternative::two_sided: r.p = std::min(1.0, 2.0 * std::min(le, ge) / total); break;
        }
        return r;
    }
    r.exact = false;
    const double n = n1 + n2;
    const double mean = n1 * n2 / 2.0;
    const double var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    const double sd = std::sqrt(var);
    if (sd == 0.0) return r;
    r.p = tail_p((r.u - mean - 0.5) / sd, (r.u - mean + 0.5) / sd, alt);
    return r;
}

double binomial_test(std::int64_t k, std::int64_t n, double p0, Alternative alt) {
    if (n < 1) throw Error("binomial_test: n must be positive");
    if (k < 0 || k > n) throw Error("binomial_test: k outside [0, n]");
    if (!(p0 >= 0.0 && p0 <= 1.0)) throw Error("binomial_test: p0 outside [0, 1]");
    auto pmf = [&](std::int64_t i) { return std::exp(log_binom_pmf(i, n, p0)); };
    double p = 0.0;
    switch (alt) {
        case Alternative::greater:
            for (std::int64_t i = k; i <= n; ++i) p += pmf(i);
            break;
        case Alternative::less:
            for (std::int64_t i = 0; i <= k; ++i) p += pmf(i);
            break;
        case Alternative::two_sided: {
            const double d = pmf(k);
            const double cutoff = d * (1.0 + 1e-7);
            for (std::int64_t i = 0; i <= n; ++i)
                if (const double q = pmf(i); q <= cutoff) p += q;
            break;
        }
    }
    return std::clamp(p, 0.0, 1.0);
}

double mcnemar(std::int64_t b, std::int64_t c) {
    if (b < 0 || c < 0) throw Error("mcnemar: negative count");
    const std::int64_t n = b + c;
    if (n == 0) return 1.0;
    double p = 0.0;
    for (std::int64_t i = 0; i <= std::min(b, c); ++i) p += std::exp(log_binom_pmf(i, n, 0.5));
    return std::min(1.0, 2.0 * p);
}

double chi_square_sf(double x, double df) {
    if (x <= 0.0) return 1.0;
    return boost::math::gamma_q(df / 2.0, x / 2.0);
}

ChiSquareResult cochran_q(const std::vector<std::vector<bool>>& table) {
    if (table.empty()) throw Error("cochran_q: empty table");
    const std::size_t k = table.front().size();
    if (k < 2) throw Error("cochran_q: need at least two conditions");
    std::vector<double> col(k, 0.0);
    double sum_row_sq = 0.0;
    double total = 0.0;
    for (const auto& row : table) {
        if (row.size() != k) throw Error("cochran_q: ragged table");
        double r = 0.0;
        for (std::size_t j = 0; j < k; ++j)
            if (row[j]) {
                col[j] += 1.0;
                r += 1.0;
            }
        sum_row_sq += r * r;
        total += r;
    }
    ChiSquareResult out;
    out.df = static_cast<double>(k - 1);
    const double kk = static_cast<double>(k);
    const double denom = kk * total - sum_row_sq;
    if (denom == 0.0) return out;
    double sum_col_sq = 0.0;
    for (double c : col) sum_col_sq += c * c;
    out.statistic = (kk - 1.0) * (kk * sum_col_sq - total * total) / denom;
    out.p = chi_square_sf(out.statistic, out.df);
    return out;
}

ChiSquareResult friedman(const std::vector<std::vector<double>>& table) {
    if (table.empty()) throw Error("friedman: empty table");
    const std::size_t k = table.front().size();
    if (k < 2) throw Error("friedman: need at least two conditions");
    const double n = static_cast<double>(table.size());
    const double kk = static_cast<double>(k);
    std::vector<double> rank_sums(k, 0.0);
    double ties = 0.0;
    for (const auto& row : table) {
        if (row.size() != k) throw Error("friedman: ragged table");
        const auto ranks = rank_average(row);
        for (std::size_t j = 0; j < k; ++j) rank_sums[j] += ranks[j];
        ties += tie_term(row);
    }
    ChiSquareResult out;
    out.df = kk - 1.0;
    double ssq = 0.0;
    for (double r : rank_sums) ssq += r * r;
    const double raw = 12.0 / (n * kk * (kk + 1.0)) * ssq - 3.0 * n * (kk + 1.0);
    const double correction = 1.0 - ties / (n * kk * (kk * kk - 1.0));
    if (correction <= 0.0) return out;
    out.statistic = std::max(0.0, raw / correction);
    out.p = chi_square_sf(out.statistic, out.df);
    return out;
}

std::vector<double> holm_correct(const std::vector<double>& pvals) {
    if (pvals.empty()) throw Error("holm_correct: no p-values");
    const std::size_t m = pvals.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });
    std::vector<double> adjusted(m);
    double running = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double p = pvals[order[i]];
        if (!(p >= 0.0 && p <= 1.0)) throw Error("holm_correct: p-value outside [0, 1]");
        running = std::max(running, std::min(1.0, static_cast<double>(m - i) * p));
        adjusted[order[i]] = running;
    }
    return adjusted;
}

}  // namespace anonpsy::stats

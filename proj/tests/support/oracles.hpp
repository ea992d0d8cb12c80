#pragma once

#include <cstdint>
#include <vector>

#include "anonpsy/stats.hpp"

/// Brute-force reference implementations. They share no code with the library.
namespace anonpsy::testing::oracle {

/// Signed-rank p-value by listing all 2^n sign vectors over the nonzero |d|, mid-ranks for ties.
double wilcoxon_p(const std::vector<double>& differences, stats::Alternative alt);

/// Binomial p-value by listing all 2^n Bernoulli sequences.
double binomial_p(int k, int n, double p0, stats::Alternative alt);

/// Exact McNemar p-value: probability under a fair coin of a split at least as unbalanced.
double mcnemar_p(int b, int c);

}  // namespace anonpsy::testing::oracle

#pragma once

#include <string>
#include <vector>

namespace pulsar {

// Regularized lower incomplete gamma P(a, x); series + continued fraction.
double regularized_gamma_lower(double a, double x);

// Upper-tail p-value of the chi-square distribution with df degrees of freedom.
double chi_square_upper_tail(double x, int df);

// Two-sided tail of the standard normal.
double normal_two_sided_p(double z);

struct FriedmanReport {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  std::vector<double> avg_ranks;                     // per model; rank 1 is best
  std::vector<std::vector<double>> raw_p;            // pairwise, symmetric, diag 1
  std::vector<std::vector<double>> holm_adjusted_p;  // Holm step-down over the pairs
};

// Friedman omnibus rank test on an accuracy matrix (replicates x models) with
// midranks on ties, followed by pairwise z-tests on average ranks whose
// p-values are Holm-adjusted.
FriedmanReport friedman_test(const std::vector<std::vector<double>>& accuracy);

// Holm step-down adjustment; output in the input order.
std::vector<double> holm_adjust(const std::vector<double>& p_values);

}  // namespace pulsar

#include "pulsar/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pulsar/errors.hpp"

namespace pulsar {

namespace {

// series expansion of P(a,x), valid for x < a + 1
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// modified Lentz continued fraction for Q(a,x), valid for x >= a + 1
double gamma_q_cf(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

std::vector<double> midranks(const std::vector<double>& values) {
  const std::size_t k = values.size();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // rank 1 = best = highest value
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<double> ranks(k, 0.0);
  std::size_t i = 0;
  while (i < k) {
    std::size_t j = i;
    while (j + 1 < k && values[order[j + 1]] == values[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = midrank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double regularized_gamma_lower(double a, double x) {
  if (a <= 0.0) throw ConfigError("incomplete gamma: a must be positive");
  if (x < 0.0) throw ConfigError("incomplete gamma: x must be non-negative");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double chi_square_upper_tail(double x, int df) {
  if (df < 1) throw ConfigError("chi-square: df must be >= 1");
  if (x <= 0.0) return 1.0;
  const double a = 0.5 * static_cast<double>(df);
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, 0.5 * x);
  return gamma_q_cf(a, 0.5 * x);
}

double normal_two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

std::vector<double> holm_adjust(const std::vector<double>& p_values) {
  const std::size_t m = p_values.size();
  for (double p : p_values)
    if (p < 0.0 || p > 1.0) throw ConfigError("holm: p-values must lie in [0,1]");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::vector<double> adjusted(m, 0.0);
  double running_max = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double scaled = std::min(1.0, static_cast<double>(m - i) * p_values[order[i]]);
    running_max = std::max(running_max, scaled);
    adjusted[order[i]] = running_max;
  }
  return adjusted;
}

FriedmanReport friedman_test(const std::vector<std::vector<double>>& accuracy) {
  const std::size_t n = accuracy.size();
  if (n < 2) throw DataError("friedman: need at least 2 replicates");
  const std::size_t k = accuracy.front().size();
  if (k < 2) throw DataError("friedman: need at least 2 models");
  for (const auto& row : accuracy)
    if (row.size() != k) throw ShapeError("friedman: ragged accuracy matrix");

  std::vector<double> rank_sums(k, 0.0);
  for (const auto& row : accuracy) {
    const std::vector<double> ranks = midranks(row);
    for (std::size_t j = 0; j < k; ++j) rank_sums[j] += ranks[j];
  }

  FriedmanReport report;
  report.df = static_cast<int>(k) - 1;
  report.avg_ranks.resize(k);
  for (std::size_t j = 0; j < k; ++j) report.avg_ranks[j] = rank_sums[j] / static_cast<double>(n);

  const double nn = static_cast<double>(n), kk = static_cast<double>(k);
  double sum_sq = 0.0;
  for (double rs : rank_sums) sum_sq += rs * rs;
  report.statistic = 12.0 / (nn * kk * (kk + 1.0)) * sum_sq - 3.0 * nn * (kk + 1.0);
  if (report.statistic < 0.0) report.statistic = 0.0;  // guard tiny negative round-off
  report.p_value = chi_square_upper_tail(report.statistic, report.df);

  // pairwise comparisons on average ranks (z-test), Holm-adjusted
  const double se = std::sqrt(kk * (kk + 1.0) / (6.0 * nn));
  std::vector<double> flat;
  report.raw_p.assign(k, std::vector<double>(k, 1.0));
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      const double z = (report.avg_ranks[a] - report.avg_ranks[b]) / se;
      const double p = normal_two_sided_p(z);
      report.raw_p[a][b] = report.raw_p[b][a] = p;
      flat.push_back(p);
    }
  const std::vector<double> adjusted = holm_adjust(flat);
  report.holm_adjusted_p.assign(k, std::vector<double>(k, 1.0));
  std::size_t idx = 0;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      report.holm_adjusted_p[a][b] = report.holm_adjusted_p[b][a] = adjusted[idx];
      ++idx;
    }
  return report;
}

}  // namespace pulsar

#include <doctest.h>

#include <cmath>

#include "pulsar/bootstrap.hpp"
#include "pulsar/errors.hpp"
#include "pulsar/metrics.hpp"
#include "pulsar/rng.hpp"
#include "pulsar/stats.hpp"

using namespace pulsar;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

// exhaustive pairwise concordance; the independent oracle for the rank AUROC
double auroc_bruteforce(const std::vector<double>& scores, const std::vector<int>& labels) {
  double num = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) num += 1.0;
      else if (scores[i] == scores[j]) num += 0.5;
    }
  }
  return num / static_cast<double>(pairs);
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("perfect separation") {
    const std::vector<double> scores{logit(0.9), logit(0.8), logit(0.3), logit(0.2)};
    const std::vector<int> labels{1, 1, 0, 0};
    const MetricsReport r = compute_metrics(scores, labels);
    CHECK(r.accuracy == doctest::Approx(1.0));
    CHECK(*r.auroc == doctest::Approx(1.0));
    CHECK(r.precision == doctest::Approx(1.0));
    CHECK(r.recall == doctest::Approx(1.0));
    CHECK(r.f1_macro == doctest::Approx(1.0));
    CHECK(r.f1_weighted == doctest::Approx(1.0));
  }

  TEST_CASE("half-concordant scores give AUROC one half") {
    const std::vector<double> scores{logit(0.9), logit(0.2), logit(0.8), logit(0.3)};
    const std::vector<int> labels{1, 1, 0, 0};
    CHECK(*compute_metrics(scores, labels).auroc == doctest::Approx(0.5));
  }

  TEST_CASE("degenerate always-positive predictor") {
    const std::vector<double> scores{1.0, 2.0, 0.5, 3.0};
    const std::vector<int> labels{1, 0, 1, 0};
    const MetricsReport r = compute_metrics(scores, labels);
    CHECK(r.recall == doctest::Approx(1.0));
    CHECK(r.accuracy == doctest::Approx(0.5));
    CHECK(r.precision == doctest::Approx(0.5));
  }

  TEST_CASE("zero scores decide positive (documented tie rule)") {
    const std::vector<double> scores{0.0, 0.0};
    const std::vector<int> labels{1, 0};
    CHECK(compute_metrics(scores, labels).recall == doctest::Approx(1.0));
  }

  TEST_CASE("rank AUROC equals brute-force pair counting exactly, ties included") {
    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
      const int n = 5 + rng.uniform_int(196);
      std::vector<double> scores(static_cast<std::size_t>(n));
      std::vector<int> labels(static_cast<std::size_t>(n));
      bool has_both = false;
      for (int i = 0; i < n; ++i) {
        scores[static_cast<std::size_t>(i)] = static_cast<double>(rng.uniform_int(9)) / 4.0;  // discrete -> many ties
        labels[static_cast<std::size_t>(i)] = rng.bernoulli(0.4) ? 1 : 0;
      }
      labels[0] = 1;
      labels[1] = 0;
      has_both = true;
      REQUIRE(has_both);
      CHECK(auroc_rank(scores, labels) == auroc_bruteforce(scores, labels));  // exact
    }
  }

  TEST_CASE("single-class labels: AUROC undefined, other metrics still computed") {
    const std::vector<double> scores{1.0, -1.0};
    const std::vector<int> labels{1, 1};
    CHECK_THROWS_AS(auroc_rank(scores, labels), DataError);
    const MetricsReport r = compute_metrics(scores, labels);
    CHECK(!r.auroc.has_value());
    CHECK(r.accuracy == doctest::Approx(0.5));
  }

  TEST_CASE("AUROC is invariant under strictly monotone score transforms") {
    Rng rng(29);
    std::vector<double> scores(60);
    std::vector<int> labels(60);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      scores[i] = rng.normal();
      labels[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    labels[0] = 1;
    labels[1] = 0;
    std::vector<double> warped(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) warped[i] = std::exp(2.0 * scores[i]) + 1.0;
    CHECK(auroc_rank(scores, labels) == doctest::Approx(auroc_rank(warped, labels)).epsilon(1e-15));
  }
}

TEST_SUITE("fusion") {
  TEST_CASE("mean of identical streams is the stream itself") {
    const std::vector<std::vector<double>> streams{{1.0, -2.0}, {1.0, -2.0}, {1.0, -2.0}, {1.0, -2.0}};
    CHECK(fuse_streams(streams) == std::vector<double>{1.0, -2.0});
  }

  TEST_CASE("balanced logits fuse to zero and decide positive") {
    const std::vector<std::vector<double>> streams{{1.0}, {1.0}, {-1.0}, {-1.0}};
    const auto fused = fuse_streams(streams);
    CHECK(fused[0] == 0.0);
    const std::vector<int> labels{1};
    CHECK(compute_metrics(fused, labels).accuracy == doctest::Approx(1.0));
  }

  TEST_CASE("length mismatch is rejected") {
    CHECK_THROWS_AS(fuse_streams({{1.0, 2.0}, {1.0}}), ShapeError);
  }
}

TEST_SUITE("holm") {
  TEST_CASE("worked example") {
    const std::vector<double> adjusted = holm_adjust({0.01, 0.04, 0.03});
    REQUIRE(adjusted.size() == 3);
    CHECK(adjusted[0] == doctest::Approx(0.03));
    CHECK(adjusted[1] == doctest::Approx(0.06));
    CHECK(adjusted[2] == doctest::Approx(0.06));
  }

  TEST_CASE("single p-value is unchanged; all-ones cap at one") {
    CHECK(holm_adjust({0.2}) == std::vector<double>{0.2});
    CHECK(holm_adjust({1.0, 1.0, 1.0}) == std::vector<double>{1.0, 1.0, 1.0});
  }

  TEST_CASE("adjusted values dominate raw and are dominated by Bonferroni") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      const int m = 1 + rng.uniform_int(10);
      std::vector<double> p(static_cast<std::size_t>(m));
      for (double& v : p) v = rng.uniform();
      const auto adjusted = holm_adjust(p);
      for (int i = 0; i < m; ++i) {
        CHECK(adjusted[static_cast<std::size_t>(i)] >= p[static_cast<std::size_t>(i)]);
        CHECK(adjusted[static_cast<std::size_t>(i)] <= std::min(1.0, m * p[static_cast<std::size_t>(i)]) + 1e-12);
      }
    }
  }

  TEST_CASE("out-of-range p-values are rejected") {
    CHECK_THROWS_AS(holm_adjust({1.2}), ConfigError);
    CHECK_THROWS_AS(holm_adjust({-0.1}), ConfigError);
  }
}

TEST_SUITE("chi_square") {
  TEST_CASE("upper tail matches closed forms at small df to 1e-10") {
    // df=2: exp(-x/2); df=4: exp(-x/2)(1+x/2); df=1: erfc(sqrt(x/2))
    for (double x : {0.1, 0.5, 1.0, 2.0, 4.0, 9.488, 20.0, 50.0}) {
      CHECK(std::fabs(chi_square_upper_tail(x, 2) - std::exp(-x / 2.0)) < 1e-10);
      CHECK(std::fabs(chi_square_upper_tail(x, 4) - std::exp(-x / 2.0) * (1.0 + x / 2.0)) < 1e-10);
      CHECK(std::fabs(chi_square_upper_tail(x, 1) - std::erfc(std::sqrt(x / 2.0))) < 1e-10);
    }
    CHECK(chi_square_upper_tail(0.0, 3) == 1.0);
  }
}

TEST_SUITE("friedman") {
  TEST_CASE("five models report df 4 against critical value 9.488") {
    Rng rng(8);
    std::vector<std::vector<double>> acc(20, std::vector<double>(5));
    for (auto& row : acc)
      for (std::size_t m = 0; m < 5; ++m) row[m] = 0.55 + 0.08 * static_cast<double>(m) + rng.normal(0.0, 0.01);
    const FriedmanReport r = friedman_test(acc);
    CHECK(r.df == 4);
    CHECK(r.statistic > 9.488);  // strongly ordered models reject the null
    CHECK(r.p_value < 0.05);
  }

  TEST_CASE("hand-worked example: 3 models, 2 consistent replicates") {
    const std::vector<std::vector<double>> acc{{0.9, 0.8, 0.7}, {0.95, 0.85, 0.75}};
    const FriedmanReport r = friedman_test(acc);
    CHECK(r.df == 2);
    CHECK(r.statistic == doctest::Approx(4.0));
    CHECK(r.avg_ranks[0] == doctest::Approx(1.0));
    CHECK(r.avg_ranks[2] == doctest::Approx(3.0));
  }

  TEST_CASE("identical columns tie every rank: statistic 0, p 1") {
    const std::vector<std::vector<double>> acc{{0.7, 0.7, 0.7}, {0.8, 0.8, 0.8}, {0.6, 0.6, 0.6}};
    const FriedmanReport r = friedman_test(acc);
    CHECK(r.statistic == doctest::Approx(0.0));
    CHECK(r.p_value == doctest::Approx(1.0));
  }

  TEST_CASE("statistic is invariant under a monotone transform of one replicate") {
    Rng rng(19);
    std::vector<std::vector<double>> acc(7, std::vector<double>(4));
    for (auto& row : acc)
      for (auto& v : row) v = rng.uniform(0.4, 0.9);
    const double before = friedman_test(acc).statistic;
    for (auto& v : acc[2]) v = std::tanh(3.0 * v) + 5.0;  // strictly monotone
    CHECK(friedman_test(acc).statistic == doctest::Approx(before).epsilon(1e-12));
  }

  TEST_CASE("average ranks sum to k(k+1)/2") {
    Rng rng(23);
    std::vector<std::vector<double>> acc(9, std::vector<double>(5));
    for (auto& row : acc)
      for (auto& v : row) v = rng.uniform();
    const FriedmanReport r = friedman_test(acc);
    double sum = 0.0;
    for (double v : r.avg_ranks) sum += v;
    CHECK(sum == doctest::Approx(15.0));
    // adjusted pairwise p-values dominate the raw ones
    for (std::size_t a = 0; a < 5; ++a)
      for (std::size_t b = 0; b < 5; ++b) CHECK(r.holm_adjusted_p[a][b] >= r.raw_p[a][b] - 1e-12);
  }

  TEST_CASE("degenerate matrices are rejected") {
    CHECK_THROWS_AS(friedman_test({{0.5, 0.6}}), DataError);                 // one replicate
    CHECK_THROWS_AS(friedman_test({{0.5}, {0.6}}), DataError);               // one model
    CHECK_THROWS_AS(friedman_test({{0.5, 0.6}, {0.5}}), ShapeError);         // ragged
  }
}

TEST_SUITE("bootstrap") {
  namespace {
  std::vector<ScoredClip> scored_fixture(int participants, int clips_per, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<ScoredClip> out;
    for (int p = 0; p < participants; ++p) {
      const bool positive = p % 2 == 0;
      for (int c = 0; c < clips_per; ++c)
        out.push_back(ScoredClip{"p" + std::to_string(p), rng.normal(positive ? 0.8 : -0.8, 1.0), positive ? 1 : 0});
    }
    return out;
  }
  }  // namespace

  TEST_CASE("deterministic given the seed") {
    const auto clips = scored_fixture(12, 3, 5);
    const BootstrapReport a = bootstrap_eval(clips, 12, 10, 99);
    const BootstrapReport b = bootstrap_eval(clips, 12, 10, 99);
    REQUIRE(a.replicate_metrics.size() == b.replicate_metrics.size());
    for (std::size_t i = 0; i < a.replicate_metrics.size(); ++i)
      CHECK(a.replicate_metrics[i].accuracy == b.replicate_metrics[i].accuracy);
    CHECK(a.stddev.accuracy >= 0.0);
    CHECK(a.stddev.accuracy > 0.0);  // heterogeneous draws vary
  }

  TEST_CASE("a replicate that samples every participant once equals direct evaluation") {
    // two participants; search a seed whose single replicate draws a permutation
    const auto clips = scored_fixture(2, 4, 7);
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& c : clips) {
      scores.push_back(c.score);
      labels.push_back(c.label);
    }
    const MetricsReport direct = compute_metrics(scores, labels);
    bool found = false;
    for (std::uint64_t seed = 0; seed < 64 && !found; ++seed) {
      const BootstrapReport r = bootstrap_eval(clips, 2, 1, seed);
      if (r.replicate_metrics[0].n != direct.n) continue;
      if (r.replicate_metrics[0].accuracy == direct.accuracy &&
          r.replicate_metrics[0].auroc.has_value() == direct.auroc.has_value() &&
          (!direct.auroc || *r.replicate_metrics[0].auroc == *direct.auroc)) {
        found = true;
      }
    }
    CHECK(found);
  }

  TEST_CASE("replicate metric means stabilize with many replicates") {
    const auto clips = scored_fixture(30, 2, 11);
    const BootstrapReport a = bootstrap_eval(clips, 30, 100, 1);
    const BootstrapReport b = bootstrap_eval(clips, 30, 100, 2);
    CHECK(std::fabs(a.mean.accuracy - b.mean.accuracy) < 0.01);
  }

  TEST_CASE("empty input is rejected") {
    CHECK_THROWS_AS(bootstrap_eval({}, 10, 5, 1), DataError);
  }
}

#include <doctest.h>

#include <cmath>

#include "pulsar/gradcheck.hpp"
#include "pulsar/rng.hpp"
#include "pulsar/tape.hpp"

using namespace pulsar;

namespace {

Tensor grad_leaf(Shape shape, std::vector<double> values) {
  Tensor t(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  return t;
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("shape/data invariants") {
    CHECK_THROWS_AS(Tensor(Shape{2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{2, 3}, std::vector<double>{1.0}), ShapeError);
    Tensor t(Shape{2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.at({1, 2}) == 1.5);
    Tensor copy = t;         // shares storage
    Tensor deep = t.clone();  // does not
    copy.data()[0] = 9.0;
    CHECK(t.data()[0] == 9.0);
    CHECK(deep.data()[0] == 1.5);
  }
}

TEST_SUITE("tape") {
  TEST_CASE("matmul identity") {
    Tape tape;
    Tensor eye(Shape{2, 2}, std::vector<double>{1, 0, 0, 1});
    Tensor x(Shape{2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
    Tensor y = tape.matmul(eye, x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]));
  }

  TEST_CASE("relu definition") {
    Tape tape;
    Tensor x(Shape{2}, std::vector<double>{-1.0, 2.5});
    Tensor y = tape.relu(x);
    CHECK(y.data()[0] == 0.0);
    CHECK(y.data()[1] == 2.5);
  }

  TEST_CASE("softmax of equal values is uniform, rows sum to one") {
    Tape tape;
    Tensor x(Shape{1, 21}, 0.7);
    Tensor y = tape.softmax(x, 1);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(1.0 / 21.0).epsilon(1e-12));

    Rng rng(11);
    for (int round = 0; round < 10; ++round) {
      Tensor r(Shape{3, 7, 4});
      for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform(-5.0, 5.0);
      Tensor s = tape.softmax(r, 1);
      for (int o = 0; o < 3; ++o)
        for (int in = 0; in < 4; ++in) {
          double sum = 0.0;
          for (int l = 0; l < 7; ++l) {
            const double v = s.at({o, l, in});
            CHECK(v >= 0.0);
            sum += v;
          }
          CHECK(std::fabs(sum - 1.0) < 1e-12);
        }
    }
  }

  TEST_CASE("shape errors name the op and shapes") {
    Tape tape;
    Tensor a(Shape{2, 3});
    Tensor b(Shape{3, 3});
    CHECK_THROWS_WITH_AS(tape.add(a, b), doctest::Contains("add"), ShapeError);
    CHECK_THROWS_WITH_AS(tape.matmul(a, Tensor(Shape{2, 2})), doctest::Contains("matmul"), ShapeError);
  }

  TEST_CASE("non-finite forward output is a hard error") {
    Tape tape;
    Tensor a(Shape{2}, std::vector<double>{1e308, 1.0});
    Tensor b(Shape{2}, std::vector<double>{1e308, 1.0});
    CHECK_THROWS_AS(tape.add(a, b), NumericError);
  }

  TEST_CASE("linear derivative") {
    Tape tape;
    Tensor w = grad_leaf({1}, {2.0});
    Tensor x(Shape{1}, std::vector<double>{3.0});
    Tensor y = tape.mul(w, x);
    tape.backward(y);
    CHECK(tape.grad(w)[0] == doctest::Approx(3.0));
    CHECK(tape.grad(x) == std::vector<double>{0.0});  // x did not require grad
  }

  TEST_CASE("dead relu has zero gradient") {
    Tape tape;
    Tensor w = grad_leaf({1}, {-1.0});
    Tensor y = tape.relu(w);
    tape.backward(y);
    CHECK(tape.grad(w)[0] == 0.0);
  }

  TEST_CASE("backward error paths") {
    Tape tape;
    Tensor w = grad_leaf({2}, {1.0, 2.0});
    Tensor y = tape.scale(w, 2.0);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);  // not scalar
    Tensor loss = tape.reduce_sum(y);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), NumericError);  // consumed

    Tape other;
    Tensor off_path = grad_leaf({2}, {5.0, 5.0});
    CHECK_THROWS_AS(other.backward(off_path), ShapeError);  // never recorded
  }

  TEST_CASE("tensors off the path get zero gradients") {
    Tape tape;
    Tensor w = grad_leaf({2}, {1.0, 2.0});
    Tensor unused = grad_leaf({3}, {1.0, 1.0, 1.0});
    tape.backward(tape.reduce_sum(tape.scale(w, 3.0)));
    const std::vector<double> g = tape.grad(unused);
    CHECK(g.size() == 3);
    for (double v : g) CHECK(v == 0.0);
  }

  TEST_CASE("batch norm train-mode statistics") {
    // before scale/shift: per-feature mean ~0 and variance ~1 on the reduce axes
    Rng rng(41);
    Tensor x(Shape{4, 3, 5, 2});
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal(1.5, 2.0);
    Tensor gamma = Tensor::ones(Shape{3});
    Tensor beta = Tensor::zeros(Shape{3});
    std::vector<double> mean(3, 0.0), var(3, 1.0);
    Tape tape;
    Tensor y = tape.batch_norm(x, gamma, beta, mean, var, BnLayout::PerChannel, true);
    const int m = 4 * 5 * 2;
    for (int c = 0; c < 3; ++c) {
      double mu = 0.0, ss = 0.0;
      for (int n = 0; n < 4; ++n)
        for (int t = 0; t < 5; ++t)
          for (int v = 0; v < 2; ++v) mu += y.at({n, c, t, v});
      mu /= m;
      for (int n = 0; n < 4; ++n)
        for (int t = 0; t < 5; ++t)
          for (int v = 0; v < 2; ++v) {
            const double d = y.at({n, c, t, v}) - mu;
            ss += d * d;
          }
      CHECK(std::fabs(mu) < 1e-6);
      CHECK(std::fabs(ss / m - 1.0) < 1e-4);
    }
    // running stats moved toward the batch statistics
    CHECK(mean[0] != 0.0);
    CHECK(var[0] != 1.0);
  }

  TEST_CASE("batch norm eval mode is a deterministic affine map") {
    Tensor x(Shape{2, 2, 2, 2}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 8, 7, 6, 5, 4, 3, 2, 1});
    Tensor gamma(Shape{2}, std::vector<double>{2.0, 0.5});
    Tensor beta(Shape{2}, std::vector<double>{0.1, -0.1});
    std::vector<double> mean{1.0, 2.0}, var{4.0, 0.25};
    Tape t1, t2;
    Tensor y1 = t1.batch_norm(x, gamma, beta, mean, var, BnLayout::PerChannel, false);
    Tensor y2 = t2.batch_norm(x, gamma, beta, mean, var, BnLayout::PerChannel, false);
    for (std::size_t i = 0; i < y1.size(); ++i) {
      CHECK(y1.data()[i] == y2.data()[i]);
    }
    // spot-check the affine map for channel 0: gamma*(x-mean)/sqrt(var+eps)+beta
    const double expect = 2.0 * (1.0 - 1.0) / std::sqrt(4.0 + kBnEps) + 0.1;
    CHECK(y1.at({0, 0, 0, 0}) == doctest::Approx(expect).epsilon(1e-12));
  }

  TEST_CASE("dropout eval identity, train-mode mean preserved") {
    Tensor x(Shape{10, 10}, 1.0);
    Tape eval_tape;
    Tensor y = eval_tape.dropout(x, 0.4, false);
    CHECK(y.key() == x.key());  // identity, same storage

    // inverted dropout: E[out] = in; Monte-Carlo over 1e5 draws within 2%
    const double p = 0.4;
    double acc = 0.0;
    std::size_t count = 0;
    for (int round = 0; round < 1000; ++round) {
      Tape tape(static_cast<std::uint64_t>(round) + 1);
      Tensor out = tape.dropout(x, p, true);
      for (std::size_t i = 0; i < out.size(); ++i) acc += out.data()[i];
      count += out.size();
    }
    CHECK(std::fabs(acc / static_cast<double>(count) - 1.0) < 0.02);
  }

  TEST_CASE("dropout is deterministic given the tape seed") {
    Tensor x(Shape{4, 4}, 1.0);
    Tape t1(99), t2(99);
    Tensor y1 = t1.dropout(x, 0.5, true);
    Tensor y2 = t2.dropout(x, 0.5, true);
    for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1.data()[i] == y2.data()[i]);
  }

  TEST_CASE("dropout probability validation") {
    Tape tape;
    Tensor x(Shape{2}, 1.0);
    CHECK_THROWS_AS(tape.dropout(x, 1.0, true), ConfigError);
    CHECK_THROWS_AS(tape.dropout(x, -0.1, true), ConfigError);
  }
}

TEST_SUITE("gradcheck") {
  // analytic adjoints vs central finite differences for every primitive and
  // both block modes; the FD side evaluates forwards only
  TEST_CASE("all primitives and blocks pass at 1e-4 over >=10 seeds") {
    GradCheckOptions options;
    options.seed = 2024;
    options.rounds = 10;
    const auto results = run_gradient_checks(options);
    CHECK(results.size() >= 20);
    for (const auto& r : results) {
      INFO(r.name, " max_rel_err=", r.max_rel_err);
      CHECK(r.pass);
    }
  }

  TEST_CASE("negative control: injected wrong adjoint is caught") {
    GradCheckOptions options;
    options.seed = 2024;
    options.rounds = 1;
    options.corrupt = "matmul";
    const auto results = run_gradient_checks(options);
    bool matmul_failed = false;
    for (const auto& r : results)
      if (r.name == "matmul") matmul_failed = !r.pass;
    CHECK(matmul_failed);
  }
}

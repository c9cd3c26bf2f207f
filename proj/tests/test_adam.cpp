#include <doctest.h>

#include <cstring>

#include "pulsar/adam.hpp"

using namespace pulsar;

TEST_SUITE("adam") {
  TEST_CASE("first bias-corrected step") {
    // theta0=0, g=1, lr=1e-3: mhat=vhat=1, so theta1 = -lr/(1+eps)
    std::vector<Tensor> params{Tensor(Shape{1}, std::vector<double>{0.0})};
    std::vector<std::vector<double>> grads{{1.0}};
    AdamState state;
    state.lr = 1e-3;
    adam_step(params, grads, state);
    CHECK(params[0].data()[0] == doctest::Approx(-1e-3).epsilon(1e-7));
    CHECK(state.step_count == 1);
  }

  TEST_CASE("zero gradient leaves parameters unchanged") {
    std::vector<Tensor> params{Tensor(Shape{3}, std::vector<double>{1.0, -2.0, 0.5})};
    std::vector<std::vector<double>> grads{{0.0, 0.0, 0.0}};
    AdamState state;
    state.lr = 0.1;
    adam_step(params, grads, state);
    adam_step(params, grads, state);
    CHECK(params[0].data()[0] == 1.0);
    CHECK(params[0].data()[1] == -2.0);
    CHECK(params[0].data()[2] == 0.5);
  }

  TEST_CASE("identical runs are bitwise identical") {
    const std::vector<double> init{0.3, -0.7};
    const std::vector<std::vector<double>> grad_seq{{0.1, -0.2}, {-0.05, 0.4}, {0.2, 0.2}};
    auto run = [&] {
      std::vector<Tensor> params{Tensor(Shape{2}, init)};
      AdamState state;
      state.lr = 1e-2;
      for (const auto& g : grad_seq) {
        std::vector<std::vector<double>> grads{g};
        adam_step(params, grads, state);
      }
      return std::pair{params[0].vec(), state};
    };
    auto [p1, s1] = run();
    auto [p2, s2] = run();
    CHECK(std::memcmp(p1.data(), p2.data(), p1.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(s1.m[0].data(), s2.m[0].data(), s1.m[0].size() * sizeof(double)) == 0);
    CHECK(std::memcmp(s1.v[0].data(), s2.v[0].data(), s1.v[0].size() * sizeof(double)) == 0);
  }

  TEST_CASE("error paths") {
    std::vector<Tensor> params{Tensor(Shape{2}, std::vector<double>{0.0, 0.0})};
    AdamState state;
    std::vector<std::vector<double>> wrong_shape{{1.0}};
    CHECK_THROWS_AS(adam_step(params, wrong_shape, state), ShapeError);
    std::vector<std::vector<double>> bad{{1.0, std::nan("")}};
    AdamState fresh;
    CHECK_THROWS_AS(adam_step(params, bad, fresh), NumericError);
    AdamState bad_lr;
    bad_lr.lr = 0.0;
    std::vector<std::vector<double>> ok{{1.0, 1.0}};
    CHECK_THROWS_AS(adam_step(params, ok, bad_lr), ConfigError);
  }

  TEST_CASE("moment arrays shape-match their parameters") {
    std::vector<Tensor> params{Tensor(Shape{2}, std::vector<double>{0.0, 0.0})};
    std::vector<std::vector<double>> grads{{1.0, 1.0}};
    AdamState state;
    adam_step(params, grads, state);
    CHECK(state.m.size() == 1);
    CHECK(state.m[0].size() == 2);
    CHECK(state.v[0].size() == 2);
    // reusing the state with a different parameter set is rejected
    std::vector<Tensor> other{Tensor(Shape{3})};
    std::vector<std::vector<double>> g3{{1.0, 1.0, 1.0}};
    CHECK_THROWS_AS(adam_step(other, g3, state), ShapeError);
  }
}

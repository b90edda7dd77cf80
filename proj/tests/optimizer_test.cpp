#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "puray/adam.hpp"
#include "test_util.hpp"

using namespace puray;

TEST_CASE("first Adam step follows the bias-corrected closed form") {
  ad::ParamStore ps;
  ad::Tensor& w = ps.add("w", {1});
  w.data = {0.5};
  w.grad = {1.0};

  ad::AdamState adam(ps);
  adam.step();
  // bias correction makes the first step exactly lr * g / (|g| + eps)
  CHECK(w.data[0] == doctest::Approx(0.5 - 0.005 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(adam.step_count() == 1);
  CHECK(adam.first_moment(0)[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(adam.second_moment(0)[0] == doctest::Approx(0.001).epsilon(1e-12));

  SUBCASE("constant gradients keep the unit step size") {
    w.grad = {1.0};
    adam.step();
    CHECK(w.data[0] == doctest::Approx(0.5 - 2.0 * 0.005 / (1.0 + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("negative gradient moves the parameter up") {
    w.grad = {-1.0};
    adam.step();
    CHECK(w.data[0] > 0.5 - 0.005 / (1.0 + 1e-8));
  }
}

TEST_CASE("zero gradients leave parameters untouched") {
  ad::ParamStore ps;
  ad::Tensor& w = ps.add("w", {3});
  w.data = {1.0, -2.0, 0.25};
  w.grad = {0.0, 0.0, 0.0};
  ad::AdamState adam(ps);
  adam.step();
  adam.step();
  CHECK(w.data[0] == 1.0);
  CHECK(w.data[1] == -2.0);
  CHECK(w.data[2] == 0.25);
}

TEST_CASE("epoch decay multiplies the learning rate") {
  ad::ParamStore ps;
  ps.add("w", {1}).grad = {0.0};
  ad::AdamState adam(ps);
  CHECK(adam.lr() == 0.005);
  adam.epoch_decay();
  CHECK(adam.lr() == doctest::Approx(0.005 * 0.99).epsilon(1e-15));
  adam.epoch_decay();
  CHECK(adam.lr() == doctest::Approx(0.005 * 0.99 * 0.99).epsilon(1e-15));
}

TEST_CASE("each parameter tensor gets independent moments") {
  ad::ParamStore ps;
  ps.add("a", {2});
  ps.add("b", {1});
  ad::Tensor& a = ps.at("a");
  a.data = {0.0, 0.0};
  a.grad = {1.0, -1.0};
  ad::Tensor& b = ps.at("b");
  b.data = {5.0};
  b.grad = {0.0};

  ad::AdamState adam(ps);
  adam.step();
  CHECK(a.data[0] < 0.0);
  CHECK(a.data[1] > 0.0);
  CHECK(a.data[1] == doctest::Approx(-a.data[0]).epsilon(1e-15));
  CHECK(b.data[0] == 5.0);
  CHECK(adam.moment_count() == 2);
}

TEST_CASE("missing gradients are a logic error") {
  ad::ParamStore ps;
  ad::Tensor& w = ps.add("w", {4});
  w.data.assign(4, 1.0);
  w.grad.clear();
  ad::AdamState adam(ps);
  CHECK_THROWS_AS(adam.step(), std::logic_error);
}

TEST_CASE("identical gradient sequences produce identical parameters") {
  auto run = [] {
    ad::ParamStore ps;
    ad::Tensor& w = ps.add("w", {3});
    w.data = {0.1, 0.2, 0.3};
    ad::AdamState adam(ps);
    Rng rng(41, "g");
    for (int i = 0; i < 25; ++i) {
      w.grad = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      adam.step();
      if (i % 10 == 9) adam.epoch_decay();
    }
    return w.data;
  };
  const auto a = run();
  const auto b = run();
  for (int i = 0; i < 3; ++i) CHECK(testutil::bits_equal(a[i], b[i]));
}

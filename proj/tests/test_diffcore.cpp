#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "vqrl/diffcore.hpp"
#include "vqrl/rng.hpp"

using namespace vqrl;
using diff::ParamTensor;
using diff::Shape;
using diff::Tape;

namespace {

ParamTensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(diff::shape_size(shape));
  for (double& x : v) x = scale * rng.uniform(-1.0, 1.0);
  return ParamTensor(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("identity MLP maps input to itself") {
  ParamTensor w({2, 2}, {1.0, 0.0, 0.0, 1.0});
  ParamTensor b = ParamTensor::zeros({2});
  Tape t;
  int x = t.input({1, 2}, std::vector<double>{1.0, 2.0});
  int y = t.add(t.matmul(x, t.leaf(w)), t.leaf(b));
  CHECK(t.values(y)[0] == doctest::Approx(1.0));
  CHECK(t.values(y)[1] == doctest::Approx(2.0));
}

TEST_CASE("1-layer affine: w=2, b=1, x=3 -> 7") {
  ParamTensor w({1, 1}, {2.0});
  ParamTensor b({1}, {1.0});
  Tape t;
  int x = t.input({1, 1}, std::vector<double>{3.0});
  int y = t.add(t.matmul(x, t.leaf(w)), t.leaf(b));
  CHECK(t.value_scalar(y) == doctest::Approx(7.0));
}

TEST_CASE("tanh fixed point at 0") {
  Tape t;
  int x = t.input({1}, std::vector<double>{0.0});
  CHECK(t.value_scalar(t.tanh_(x)) == 0.0);
}

TEST_CASE("backward: d(x^2)/dx = 2x at x=3") {
  ParamTensor x({1}, {3.0});
  Tape t;
  int out = t.square(t.leaf(x));
  t.backward(out);
  CHECK(x.grad[0] == doctest::Approx(6.0));
}

TEST_CASE("backward: tanh'(0) = 1") {
  ParamTensor x({1}, {0.0});
  Tape t;
  int out = t.tanh_(t.leaf(x));
  t.backward(out);
  CHECK(x.grad[0] == doctest::Approx(1.0));
}

TEST_CASE("backward before forward output id is a usage error") {
  Tape t;
  CHECK_THROWS_AS(t.grad(0), std::exception);
}

TEST_CASE("shape mismatch names the op") {
  Tape t;
  int a = t.input({2, 3}, std::vector<double>(6, 0.0));
  int b = t.input({2, 3}, std::vector<double>(6, 0.0));
  try {
    t.matmul(a, b);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
}

TEST_CASE("untouched leaves keep zero grad") {
  ParamTensor x({1}, {2.0});
  ParamTensor unused({1}, {5.0});
  Tape t;
  int out = t.square(t.leaf(x));
  t.leaf(unused);
  t.backward(out);
  CHECK(unused.grad[0] == 0.0);
}

TEST_CASE("backward is linear in the seed") {
  Rng rng(7);
  ParamTensor w = random_tensor({3, 2}, rng);
  Tape t;
  int x = t.input({1, 3}, std::vector<double>{0.3, -0.7, 1.1});
  int y = t.tanh_(t.matmul(x, t.leaf(w)));

  std::vector<double> seed{0.5, -1.5};
  t.backward(y, seed);
  auto g1 = t.grad(x);
  std::vector<double> first(g1.begin(), g1.end());

  std::vector<double> seed2{1.0, -3.0};
  w.zero_grad();
  t.backward(y, seed2);
  auto g2 = t.grad(x);
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(g2[i] == doctest::Approx(2.0 * first[i]).epsilon(1e-12));
  }
}

TEST_CASE("replay reproduces values bit-exactly") {
  Rng rng(11);
  ParamTensor w1 = random_tensor({4, 8}, rng);
  ParamTensor w2 = random_tensor({8, 1}, rng);
  Tape t;
  int x = t.input({2, 4}, std::vector<double>{0.1, 0.2, 0.3, 0.4, -0.1, -0.2, -0.3, -0.4});
  int h = t.tanh_(t.matmul(x, t.leaf(w1)));
  int y = t.matmul(h, t.leaf(w2));
  auto before = t.values(y);
  std::vector<double> saved(before.begin(), before.end());
  t.replay();
  auto after = t.values(y);
  for (std::size_t i = 0; i < saved.size(); ++i) CHECK(after[i] == saved[i]);
}

TEST_CASE("finite differences: linear model is exact to 1e-8") {
  Rng rng(3);
  ParamTensor w = random_tensor({5, 1}, rng);
  ParamTensor b = random_tensor({1}, rng);
  std::vector<double> xv{0.5, -0.2, 0.8, 0.1, -0.9};
  auto build = [&](Tape& t, std::vector<int>& leaves) {
    int x = t.input({1, 5}, xv);
    return t.sum(t.add(t.matmul(x, leaves[0]), leaves[1]));
  };
  auto res = diff::finite_diff_check(build, {&w, &b}, 1e-5);
  CHECK(res.max_rel_error < 1e-8);
  CHECK(res.excluded_nondifferentiable == 0);
}

TEST_CASE("finite differences: 2-layer tanh MLP under 1e-4") {
  Rng rng(5);
  ParamTensor w1 = random_tensor({3, 8}, rng);
  ParamTensor b1 = random_tensor({8}, rng, 0.1);
  ParamTensor w2 = random_tensor({8, 2}, rng);
  ParamTensor b2 = random_tensor({2}, rng, 0.1);
  std::vector<double> xv{0.4, -0.6, 0.9};
  auto build = [&](Tape& t, std::vector<int>& leaves) {
    int x = t.input({1, 3}, xv);
    int h = t.tanh_(t.add(t.matmul(x, leaves[0]), leaves[1]));
    int y = t.add(t.matmul(h, leaves[2]), leaves[3]);
    return t.mean(t.square(y));
  };
  auto res = diff::finite_diff_check(build, {&w1, &b1, &w2, &b2}, 1e-5);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("relu kink inputs are flagged and excluded") {
  ParamTensor x({1}, {0.0});  // exactly at the kink
  auto build = [&](Tape& t, std::vector<int>& leaves) {
    return t.sum(t.relu(leaves[0]));
  };
  auto res = diff::finite_diff_check(build, {&x}, 1e-5);
  CHECK(res.excluded_nondifferentiable == 1);
  CHECK(res.checked == 0);
}

TEST_CASE("all supported ops pass finite differences at random smooth points") {
  Rng rng(1234);
  int failures = 0;
  for (int trial = 0; trial < 50; ++trial) {
    ParamTensor w1 = random_tensor({4, 6}, rng);
    ParamTensor b1 = random_tensor({6}, rng, 0.2);
    ParamTensor w2 = random_tensor({6, 3}, rng);
    std::vector<double> xv(8);
    for (double& v : xv) v = rng.uniform(-1.5, 1.5);
    int variant = trial % 5;
    auto build = [&](Tape& t, std::vector<int>& leaves) {
      int x = t.input({2, 4}, xv);
      int lin = t.add(t.matmul(x, leaves[0]), leaves[1]);
      int h = 0;
      switch (variant) {
        case 0: h = t.tanh_(lin); break;
        case 1: h = t.square(lin); break;
        case 2: h = t.exp_(t.scale(lin, 0.3)); break;
        case 3: h = t.log_(t.add_scalar(t.square(lin), 1.0)); break;
        default: h = t.mul(t.tanh_(lin), lin); break;
      }
      int y = t.matmul(h, leaves[2]);
      int z = t.sub(y, t.clip(y, -0.5, 0.5));
      return t.add(t.mean(t.square(z)), t.scale(t.sum(t.tanh_(y)), 0.1));
    };
    auto res = diff::finite_diff_check(build, {&w1, &b1, &w2}, 1e-5);
    if (res.max_rel_error >= 1e-4) ++failures;
  }
  CHECK(failures == 0);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "stmaml/nn.hpp"
#include "stmaml/tensor.hpp"

using namespace stmaml;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("primitive forward values") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5).epsilon(1e-15));

  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor prod = matmul(a, eye);
  for (std::size_t i = 0; i < 4; ++i) CHECK(prod.values()[i] == a.values()[i]);

  Tensor col = Tensor::from({2, 1}, {1, 3});
  Tensor m = mean_axis0(col);
  CHECK(m.values()[0] == doctest::Approx(2.0));
}

TEST_CASE("shape mismatch names the primitive and shapes") {
  Tensor a = Tensor::from({2, 3}, std::vector<double>(6, 0.0));
  Tensor b = Tensor::from({2, 2}, std::vector<double>(4, 0.0));
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), std::runtime_error);
  CHECK_THROWS_WITH_AS(matmul(a, Tensor::from({2, 2}, std::vector<double>(4, 0.0))),
                       doctest::Contains("matmul"), std::runtime_error);
}

TEST_CASE("first-order gradients") {
  Tensor x = Tensor::leaf({}, {3.0});
  Tensor y = square(x);
  auto g = grad(y, {x});
  CHECK(g[0].item() == doctest::Approx(6.0).epsilon(1e-14));

  SUBCASE("non-scalar output rejected") {
    Tensor v = Tensor::leaf({2}, {1.0, 2.0});
    CHECK_THROWS_AS(grad(square(v), {v}), std::runtime_error);
  }

  SUBCASE("unreachable wrt gives zeros") {
    Tensor a = Tensor::leaf({}, {1.0});
    Tensor b = Tensor::leaf({2}, {1.0, 2.0});
    auto gs = grad(square(a), {b});
    CHECK(gs[0].values()[0] == 0.0);
    CHECK(gs[0].values()[1] == 0.0);
  }

  SUBCASE("detached tensor query fails explicitly") {
    Tensor c = Tensor::scalar(1.0);
    Tensor l = Tensor::leaf({}, {1.0});
    CHECK_THROWS_AS(grad(square(l), {c}), std::runtime_error);
  }
}

TEST_CASE("second-order gradients") {
  // d2(x^3)/dx2 at x=2 -> 12
  Tensor x = Tensor::leaf({}, {2.0});
  Tensor y = mul(x, square(x));
  auto g1 = grad(y, {x}, /*create_graph=*/true);
  auto g2 = grad(g1[0], {x});
  CHECK(g2[0].item() == doctest::Approx(12.0).epsilon(1e-13));
}

TEST_CASE("gradient through an inner gradient step") {
  // L(t) = t^2, one step t' = t - 0.1 * dL/dt, outer loss L(t').
  // Hand chain rule: d/dt ((1-2*0.1)^2 t^2) = 2 * 0.64 * t = 1.28 at t=1.
  Tensor theta = Tensor::leaf({}, {1.0});
  Tensor inner = square(theta);
  auto gi = grad(inner, {theta}, /*create_graph=*/true);
  Tensor theta1 = sub(theta, mul_scalar(gi[0], 0.1));
  Tensor outer = square(theta1);
  auto go = grad(outer, {theta});
  CHECK(go[0].item() == doctest::Approx(1.28).epsilon(1e-13));
}

TEST_CASE("finite-difference check on simple functions") {
  std::mt19937_64 rng(7);
  SUBCASE("sum of squares") {
    Tensor x = random_tensor({8}, rng);
    double err = finite_difference_check([](const Tensor& t) { return sum_all(square(t)); }, x);
    CHECK(err < 1e-6);
  }
  SUBCASE("constant function has zero gradient and zero error") {
    Tensor x = random_tensor({5}, rng);
    double err =
        finite_difference_check([](const Tensor& t) { return mul_scalar(sum_all(mul_scalar(t, 0.0)), 1.0); }, x);
    CHECK(err == 0.0);
  }
  SUBCASE("sigmoid of dot product") {
    Tensor w = random_tensor({6}, rng).detach();
    Tensor x = random_tensor({6}, rng);
    auto f = [&w](const Tensor& t) { return sum_all(sigmoid(sum_all(mul(t, w)))); };
    CHECK(finite_difference_check(f, x) < 1e-5);
  }
  SUBCASE("eps outside the supported window fails") {
    Tensor x = random_tensor({3}, rng);
    CHECK_THROWS_AS(
        finite_difference_check([](const Tensor& t) { return sum_all(t); }, x, 1e-2),
        std::runtime_error);
  }
}

TEST_CASE("every primitive passes a finite-difference check") {
  std::mt19937_64 rng(11);
  auto check = [&](const char* name, const std::function<Tensor(const Tensor&)>& f, Shape shape,
                   double lo = -2.0, double hi = 2.0) {
    Tensor x = random_tensor(shape, rng, lo, hi);
    double err = finite_difference_check(f, x);
    INFO(name);
    CHECK(err < 1e-5);
  };

  Tensor other = random_tensor({3, 4}, rng).detach();
  Tensor vec = random_tensor({4}, rng).detach();
  Tensor mat = random_tensor({4, 3}, rng).detach();

  check("add", [&](const Tensor& t) { return sum_all(square(add(t, other))); }, {3, 4});
  check("sub", [&](const Tensor& t) { return sum_all(square(sub(other, t))); }, {3, 4});
  check("mul", [&](const Tensor& t) { return sum_all(mul(t, other)); }, {3, 4});
  check("div", [&](const Tensor& t) { return sum_all(div(other, t)); }, {3, 4}, 0.5, 2.0);
  check("neg", [&](const Tensor& t) { return sum_all(square(neg(t))); }, {3, 4});
  check("matmul", [&](const Tensor& t) { return sum_all(square(matmul(t, mat))); }, {3, 4});
  check("transpose", [&](const Tensor& t) { return sum_all(square(matmul(transpose(t), mat))); },
        {4, 3});
  check("concat", [&](const Tensor& t) { return sum_all(square(concat(t, other))); }, {3, 4});
  check("vstack", [&](const Tensor& t) { return sum_all(square(vstack(t, other))); }, {2, 4});
  check("slice", [&](const Tensor& t) { return sum_all(square(slice_last(t, 1, 2))); }, {3, 4});
  check("slice_rows", [&](const Tensor& t) { return sum_all(square(slice_rows(t, 1, 2))); }, {4, 3});
  check("reshape", [&](const Tensor& t) { return sum_all(square(reshape(t, {12}))); }, {3, 4});
  check("tile_rows", [&](const Tensor& t) { return sum_all(square(tile_rows(t, 5))); }, {4});
  check("sum_axis0", [&](const Tensor& t) { return sum_all(square(sum_axis0(t))); }, {3, 4});
  check("mean_axis0", [&](const Tensor& t) { return sum_all(square(mean_axis0(t))); }, {3, 4});
  check("mean_all", [&](const Tensor& t) { return square(mean_all(t)); }, {3, 4});
  check("add_rowwise", [&](const Tensor& t) { return sum_all(square(add_rowwise(t, vec))); },
        {3, 4});
  check("add_rowwise_bias", [&](const Tensor& t) { return sum_all(square(add_rowwise(other, t))); },
        {4});
  check("sigmoid", [&](const Tensor& t) { return sum_all(sigmoid(t)); }, {3, 4});
  check("tanh", [&](const Tensor& t) { return sum_all(tanh_t(t)); }, {3, 4});
  check("relu", [&](const Tensor& t) { return sum_all(relu(t)); }, {3, 4}, 0.3, 2.0);
  check("exp", [&](const Tensor& t) { return sum_all(exp_t(t)); }, {3, 4});
  check("log", [&](const Tensor& t) { return sum_all(log_t(t)); }, {3, 4}, 0.5, 2.0);
  check("softplus", [&](const Tensor& t) { return sum_all(softplus(t)); }, {3, 4});
  check("square", [&](const Tensor& t) { return sum_all(square(t)); }, {3, 4});
  check("matvec", [&](const Tensor& t) { return sum_all(square(matvec(other, t))); }, {4});
  check("add_scalar/mul_scalar",
        [&](const Tensor& t) { return sum_all(square(add_scalar(mul_scalar(t, 1.7), 0.3))); },
        {3, 4});
}

TEST_CASE("second-order matches finite differences of the first gradient") {
  // 20 random tiny tanh MLP losses; relu is excluded here because its
  // second derivative is undefined at the kinks.
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    Mlp net = init_mlp({3, 4, 1}, 1000 + trial, Activation::Tanh);
    Tensor x = random_tensor({5, 3}, rng).detach();
    Tensor y = random_tensor({5, 1}, rng).detach();

    // Pack the first-layer weight as the variable under test.
    auto loss_fn = [&](const Tensor& w0) {
      Mlp m = net;
      m.weights[0] = reshape(w0, {3, 4});
      Tensor pred = mlp_forward(m, x);
      return mean_all(square(sub(pred, y)));
    };
    auto grad_dot_probe = [&](const Tensor& w0) {
      Tensor w = w0.tracked() ? w0 : w0.releaf();
      Tensor loss = loss_fn(w);
      auto g = grad(loss, {w}, /*create_graph=*/true);
      return sum_all(g[0]);
    };
    Tensor w0 = reshape(net.weights[0].detach(), {12});
    double err = finite_difference_check(grad_dot_probe, w0);
    INFO("trial ", trial);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("gradients are bitwise deterministic") {
  std::mt19937_64 rng(5);
  Tensor xv = random_tensor({6, 3}, rng);
  Tensor yv = random_tensor({6, 1}, rng);

  auto run = [&] {
    Mlp net = init_mlp({3, 8, 1}, 99, Activation::Tanh);
    Tensor loss = mean_all(square(sub(mlp_forward(net, xv), yv)));
    return grad(loss, net.params());
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) CHECK(a[i].values()[j] == b[i].values()[j]);
}

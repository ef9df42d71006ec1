#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "stmaml/nn.hpp"

using namespace stmaml;

TEST_CASE("forward pass matches hand computation") {
  // One hidden layer, ReLU. Weights chosen so the arithmetic is exact.
  Mlp net;
  net.act = Activation::Relu;
  net.weights = {Tensor::from({2, 2}, {1, -1, 0, 2}), Tensor::from({2, 1}, {1, 1})};
  net.biases = {Tensor::from({2}, {0.5, -0.5}), Tensor::from({1}, {0.25})};

  // x = [1, 2]: pre1 = [1*1+2*0+0.5, 1*(-1)+2*2-0.5] = [1.5, 2.5]
  // relu keeps both, out = 1.5 + 2.5 + 0.25 = 4.25
  Tensor x = Tensor::from({1, 2}, {1, 2});
  CHECK(mlp_forward(net, x).item() == doctest::Approx(4.25).epsilon(1e-15));

  // x = [-3, 0]: pre1 = [-2.5, 2.5], relu -> [0, 2.5], out = 2.75
  Tensor x2 = Tensor::from({1, 2}, {-3, 0});
  CHECK(mlp_forward(net, x2).item() == doctest::Approx(2.75).epsilon(1e-15));

  SUBCASE("no activation after the final layer") {
    // A negative final pre-activation must survive.
    net.biases[1] = Tensor::from({1}, {-10.0});
    CHECK(mlp_forward(net, x).item() == doctest::Approx(-6.0).epsilon(1e-15));
  }

  SUBCASE("batch rows are independent") {
    Tensor both = Tensor::from({2, 2}, {1, 2, -3, 0});
    Tensor out = mlp_forward(net, both);
    CHECK(out.values()[0] == doctest::Approx(4.25));
    CHECK(out.values()[1] == doctest::Approx(2.75));
  }
}

TEST_CASE("linear network is exactly affine") {
  Mlp net = init_mlp({3, 5, 1}, 77, Activation::None);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  auto rand_row = [&] {
    std::vector<double> v(3);
    for (auto& e : v) v[&e - v.data()] = u(rng);
    return v;
  };
  std::vector<double> a = rand_row(), b = rand_row();
  std::vector<double> sum(3);
  for (int i = 0; i < 3; ++i) sum[i] = a[i] + b[i];

  auto f = [&](const std::vector<double>& v) {
    return mlp_forward(net, Tensor::from({1, 3}, v)).item();
  };
  double f0 = f({0, 0, 0});
  CHECK(f(sum) == doctest::Approx(f(a) + f(b) - f0).epsilon(1e-12));
}

TEST_CASE("initialization shapes, bounds, and determinism") {
  Mlp net = init_mlp({2, 40, 40, 1}, 123);
  REQUIRE(net.weights.size() == 3);
  REQUIRE(net.biases.size() == 3);
  CHECK(net.weights[0].shape() == Shape{2, 40});
  CHECK(net.weights[1].shape() == Shape{40, 40});
  CHECK(net.weights[2].shape() == Shape{40, 1});
  CHECK(net.in_dim() == 2);
  CHECK(net.out_dim() == 1);

  for (double b : net.biases[1].values()) CHECK(b == 0.0);

  // Xavier uniform: |w| <= sqrt(6 / (in + out)).
  double bound = std::sqrt(6.0 / (40 + 40));
  double max_abs = 0.0;
  for (double w : net.weights[1].values()) max_abs = std::max(max_abs, std::abs(w));
  CHECK(max_abs <= bound);
  CHECK(max_abs > 0.5 * bound);  // not suspiciously tiny

  SUBCASE("same seed, same weights; different seed, different weights") {
    Mlp again = init_mlp({2, 40, 40, 1}, 123);
    Mlp other = init_mlp({2, 40, 40, 1}, 124);
    for (std::size_t l = 0; l < 3; ++l)
      for (std::size_t i = 0; i < net.weights[l].values().size(); ++i)
        CHECK(net.weights[l].values()[i] == again.weights[l].values()[i]);
    bool any_diff = false;
    for (std::size_t i = 0; i < net.weights[0].values().size(); ++i)
      any_diff = any_diff || net.weights[0].values()[i] != other.weights[0].values()[i];
    CHECK(any_diff);
  }

  SUBCASE("params are tracked leaves in layer order") {
    auto ps = net.params();
    REQUIRE(ps.size() == 6);
    for (auto& p : ps) CHECK(p.tracked());
    CHECK(ps[0].shape() == Shape{2, 40});
    CHECK(ps[1].shape() == Shape{40});
  }
}

TEST_CASE("KL divergence closed form") {
  SUBCASE("identical distributions give zero") {
    GaussianDiag q{Tensor::from({3}, {0.1, -0.5, 2.0}), Tensor::from({3}, {1.0, 0.5, 2.0})};
    CHECK(kl_diag_gaussians(q, q).item() == doctest::Approx(0.0).epsilon(1e-15));
  }

  SUBCASE("unit-variance mean shift gives half squared distance") {
    GaussianDiag q{Tensor::from({2}, {1.0, -2.0}), Tensor::from({2}, {1.0, 1.0})};
    GaussianDiag p{Tensor::from({2}, {0.0, 0.0}), Tensor::from({2}, {1.0, 1.0})};
    CHECK(kl_diag_gaussians(q, p).item() == doctest::Approx(2.5).epsilon(1e-14));
  }

  SUBCASE("scale-only case against the scalar formula") {
    // KL(N(0,s^2) || N(0,1)) = -log s + (s^2 - 1) / 2
    double s = 0.7;
    GaussianDiag q{Tensor::from({1}, {0.0}), Tensor::from({1}, {s})};
    GaussianDiag p{Tensor::from({1}, {0.0}), Tensor::from({1}, {1.0})};
    double expect = -std::log(s) + (s * s - 1.0) / 2.0;
    CHECK(kl_diag_gaussians(q, p).item() == doctest::Approx(expect).epsilon(1e-14));
  }

  SUBCASE("Monte Carlo estimate agrees") {
    // KL(q||p) = E_q[log q(x) - log p(x)], estimated with a large sample.
    GaussianDiag q{Tensor::from({2}, {0.3, -0.8}), Tensor::from({2}, {0.9, 1.4})};
    GaussianDiag p{Tensor::from({2}, {-0.2, 0.5}), Tensor::from({2}, {1.2, 0.6})};
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n01;
    double acc = 0.0;
    const int N = 400000;
    for (int i = 0; i < N; ++i) {
      for (int d = 0; d < 2; ++d) {
        double xq = q.mean.values()[d] + q.std.values()[d] * n01(rng);
        double lq = -std::log(q.std.values()[d]) -
                    0.5 * std::pow((xq - q.mean.values()[d]) / q.std.values()[d], 2);
        double lp = -std::log(p.std.values()[d]) -
                    0.5 * std::pow((xq - p.mean.values()[d]) / p.std.values()[d], 2);
        acc += lq - lp;
      }
    }
    double mc = acc / N;
    CHECK(kl_diag_gaussians(q, p).item() == doctest::Approx(mc).epsilon(0.02));
  }

  SUBCASE("differentiable with respect to both means") {
    Tensor qm = Tensor::leaf({2}, {1.0, -2.0});
    GaussianDiag q{qm, Tensor::from({2}, {1.0, 1.0})};
    GaussianDiag p{Tensor::from({2}, {0.0, 0.0}), Tensor::from({2}, {1.0, 1.0})};
    auto g = grad(kl_diag_gaussians(q, p), {qm});
    CHECK(g[0].values()[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(g[0].values()[1] == doctest::Approx(-2.0).epsilon(1e-14));
  }

  SUBCASE("non-positive std is rejected") {
    CHECK_THROWS_AS(GaussianDiag(Tensor::from({1}, {0.0}), Tensor::from({1}, {0.0})),
                    std::runtime_error);
    CHECK_THROWS_AS(GaussianDiag(Tensor::from({1}, {0.0}), Tensor::from({1}, {-1.0})),
                    std::runtime_error);
  }
}

TEST_CASE("reparameterized sampling") {
  GaussianDiag d{Tensor::from({2}, {3.0, -1.0}), Tensor::from({2}, {0.5, 2.0})};

  SUBCASE("exact affine map of the noise") {
    Tensor eps = Tensor::from({2}, {1.0, -2.0});
    Tensor z = reparameterize_sample(d, eps);
    CHECK(z.values()[0] == doctest::Approx(3.5).epsilon(1e-15));
    CHECK(z.values()[1] == doctest::Approx(-5.0).epsilon(1e-15));
  }

  SUBCASE("gradients hit mean and std, never the noise") {
    Tensor mean = Tensor::leaf({1}, {0.0});
    Tensor std_ = Tensor::leaf({1}, {1.0});
    Tensor eps = Tensor::leaf({1}, {0.7});
    Tensor z = sum_all(reparameterize_sample({mean, std_}, eps));
    auto g = grad(z, {mean, std_});
    CHECK(g[0].item() == doctest::Approx(1.0));
    CHECK(g[1].item() == doctest::Approx(0.7));
    // Noise is detached inside, so it is unreachable and gets a zero gradient.
    auto ge = grad(sum_all(reparameterize_sample({mean, std_}, eps)), {eps});
    CHECK(ge[0].item() == 0.0);
  }

  SUBCASE("sample mean and variance converge to the distribution") {
    std::mt19937_64 rng(99);
    double s0 = 0.0, s1 = 0.0;
    const int N = 200000;
    for (int i = 0; i < N; ++i) {
      Tensor z = reparameterize_sample(d, standard_normal(2, rng));
      s0 += z.values()[0];
      s1 += z.values()[1] * z.values()[1];
    }
    CHECK(s0 / N == doctest::Approx(3.0).epsilon(0.01));
    // E[z1^2] = var + mean^2 = 4 + 1 = 5
    CHECK(s1 / N == doctest::Approx(5.0).epsilon(0.02));
  }
}

TEST_CASE("seed derivation produces distinct stable streams") {
  CHECK(derive_seed(42, 0) == derive_seed(42, 0));
  CHECK(derive_seed(42, 0) != derive_seed(42, 1));
  CHECK(derive_seed(42, 0) != derive_seed(43, 0));

  // No collisions across a modest grid of (base, index) pairs.
  std::vector<std::uint64_t> seen;
  for (std::uint64_t b = 0; b < 50; ++b)
    for (std::uint64_t i = 0; i < 50; ++i) seen.push_back(derive_seed(b, i));
  std::sort(seen.begin(), seen.end());
  CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
}

TEST_CASE("activation name round trip") {
  for (Activation a : {Activation::Relu, Activation::Tanh, Activation::None})
    CHECK(activation_from_string(to_string(a)) == a);
  CHECK_THROWS_AS(activation_from_string("swish"), std::runtime_error);
}

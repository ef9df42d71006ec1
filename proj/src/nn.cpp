#include "stmaml/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace stmaml {

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "none") return Activation::None;
  throw std::runtime_error("unknown activation: " + s);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::None: return "none";
  }
  return "?";
}

std::vector<Tensor> Mlp::params() const {
  std::vector<Tensor> p;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    p.push_back(weights[i]);
    p.push_back(biases[i]);
  }
  return p;
}

Mlp init_mlp(const std::vector<std::size_t>& dims, std::uint64_t seed, Activation act) {
  if (dims.size() < 2) throw std::runtime_error("init_mlp: need at least 2 dims");
  std::mt19937_64 rng(seed);
  Mlp mlp;
  mlp.act = act;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::size_t in = dims[i], out = dims[i + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(in * out);
    for (auto& x : w) x = u(rng);
    mlp.weights.push_back(Tensor::leaf({in, out}, std::move(w)));
    mlp.biases.push_back(Tensor::leaf({out}, std::vector<double>(out, 0.0)));
  }
  return mlp;
}

Tensor mlp_forward(const Mlp& params, const Tensor& x) {
  if (x.shape().size() != 2 || x.shape()[1] != params.in_dim())
    throw std::runtime_error("mlp_forward: input dim " +
                             std::to_string(x.shape().size() == 2 ? x.shape()[1] : 0) +
                             " does not match layer 0 in-dim " + std::to_string(params.in_dim()));
  Tensor h = x;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    if (h.shape()[1] != params.weights[i].shape()[0])
      throw std::runtime_error("mlp_forward: dim mismatch at layer " + std::to_string(i));
    h = add_rowwise(matmul(h, params.weights[i]), params.biases[i]);
    if (i + 1 < params.weights.size()) {
      switch (params.act) {
        case Activation::Relu: h = relu(h); break;
        case Activation::Tanh: h = tanh_t(h); break;
        case Activation::None: break;
      }
    }
  }
  return h;
}

GaussianDiag::GaussianDiag(Tensor m, Tensor s) : mean(std::move(m)), std(std::move(s)) {
  if (mean.shape() != std.shape() || mean.shape().size() != 1)
    throw std::runtime_error("GaussianDiag: mean/std must be equal-shape vectors");
  for (double v : std.values())
    if (!(v > 0.0)) throw std::runtime_error("GaussianDiag: std must be strictly positive");
}

Tensor kl_diag_gaussians(const GaussianDiag& q, const GaussianDiag& p) {
  if (q.dim() != p.dim())
    throw std::runtime_error("kl_diag_gaussians: dimension mismatch " + std::to_string(q.dim()) +
                             " vs " + std::to_string(p.dim()));
  // sum_i [ log(p.std/q.std) + (q.std^2 + (q.mean - p.mean)^2) / (2 p.std^2) - 1/2 ]
  Tensor log_ratio = log_t(div(p.std, q.std));
  Tensor num = add(square(q.std), square(sub(q.mean, p.mean)));
  Tensor den = mul_scalar(square(p.std), 2.0);
  Tensor terms = add_scalar(add(log_ratio, div(num, den)), -0.5);
  return sum_all(terms);
}

Tensor reparameterize_sample(const GaussianDiag& dist, const Tensor& noise) {
  return add(dist.mean, mul(dist.std, noise.detach()));
}

Tensor standard_normal(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(d);
  for (auto& x : v) x = n(rng);
  return Tensor::from({d}, std::move(v));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace stmaml

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "stmaml/tensor.hpp"

namespace stmaml {

enum class Activation { Relu, Tanh, None };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

/// Fully connected network. weights[i] is [in x out], biases[i] is [out];
/// the activation is applied between layers, never after the last one.
struct Mlp {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  Activation act = Activation::Relu;

  std::size_t in_dim() const { return weights.front().shape()[0]; }
  std::size_t out_dim() const { return weights.back().shape()[1]; }
  std::vector<Tensor> params() const;
};

/// Xavier-uniform weights, zero biases, fully determined by the seed.
Mlp init_mlp(const std::vector<std::size_t>& dims, std::uint64_t seed,
             Activation act = Activation::Relu);

/// x is [n x in]; returns [n x out].
Tensor mlp_forward(const Mlp& params, const Tensor& x);

struct GaussianDiag {
  Tensor mean;  // [d]
  Tensor std;   // [d], strictly positive

  GaussianDiag() = default;
  GaussianDiag(Tensor mean, Tensor std);
  std::size_t dim() const { return mean.shape()[0]; }
};

/// KL(q || p) for diagonal Gaussians, closed form, differentiable.
Tensor kl_diag_gaussians(const GaussianDiag& q, const GaussianDiag& p);

/// mean + std * noise. Gradients flow to mean and std; noise is data.
Tensor reparameterize_sample(const GaussianDiag& dist, const Tensor& noise);

/// Standard-normal draws, deterministic under seed.
Tensor standard_normal(std::size_t d, std::mt19937_64& rng);

/// Stable stream splitting: mixes a base seed with an index.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace stmaml

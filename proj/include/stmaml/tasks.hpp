#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "stmaml/tensor.hpp"

namespace stmaml {

enum class LossKind { SquaredError, Bernoulli };

/// One meta-learning episode. family_id labels the generating distribution
/// for diagnostics and plots; nothing on the training path reads it.
struct Task {
  Tensor x_tr;  // [k x d_in]
  Tensor y_tr;  // [k x d_out]
  Tensor x_te;  // [m x d_in]
  Tensor y_te;  // [m x d_out]
  LossKind loss_kind = LossKind::SquaredError;
  int family_id = -1;

  std::size_t shots() const { return x_tr.shape()[0]; }
  std::size_t queries() const { return x_te.shape()[0]; }
  std::size_t d_in() const { return x_tr.shape()[1]; }
  std::size_t d_out() const { return y_tr.shape()[1]; }
};

enum class Family : int {
  Sinusoid = 0,
  Line = 1,
  Quadratic = 2,
  Cubic = 3,
  QuadraticSurface = 4,
  Ripple = 5,
};

Family family_from_string(const std::string& s);
std::string to_string(Family f);

struct EpisodeConfig {
  std::size_t shots = 10;
  std::size_t queries = 100;
  double noise_std = 0.3;
  std::vector<Family> families = {Family::Sinusoid,  Family::Line,
                                  Family::Quadratic, Family::Cubic,
                                  Family::QuadraticSurface, Family::Ripple};
  std::uint64_t seed = 0;
};

Task sample_2d_regression_task(const EpisodeConfig& cfg, std::mt19937_64& rng);

/// Coordinate-regression episode over one 28x28 grayscale image in [0,1].
/// Train split is k distinct pixels, test split is the other 784-k.
Task sample_image_completion_task(const Tensor& image, std::size_t shots, std::mt19937_64& rng);

std::vector<Task> sample_episode_batch(const EpisodeConfig& cfg, std::size_t batch_size,
                                       std::mt19937_64& rng);

/// Variant for figure dumps: the test split is a dense noiseless grid of
/// grid_points inputs covering x1 in [0,5] with x2 fixed to 1, so the true
/// curve can be replotted exactly.
Task sample_2d_regression_curve_task(const EpisodeConfig& cfg, std::mt19937_64& rng,
                                     std::size_t grid_points);

/// JSON-lines replay format: one task per line with x_tr/y_tr/x_te/y_te/family_id.
void dump_tasks_jsonl(const std::vector<Task>& tasks, std::ostream& out);
std::vector<Task> load_tasks_jsonl(std::istream& in);

}  // namespace stmaml

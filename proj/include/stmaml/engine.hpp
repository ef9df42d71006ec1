#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stmaml/nn.hpp"
#include "stmaml/tasks.hpp"

namespace stmaml {

/// Model dimensions, fixed at initialization and stored in checkpoints.
struct ModelDims {
  std::vector<std::size_t> learner;  // input dim excludes the augmentation
  std::vector<std::size_t> encoder;  // input dim = d_in + d_out
  std::vector<std::size_t> head_hidden;  // hidden dims of the mu/sigma heads
  std::size_t d_z = 40;
  std::size_t d_h = static_cast<std::size_t>(-1);  // unset until finalized
};

/// All learnable meta-parameters. The final learner layer (weights and
/// bias) is the task-learner part that the gate modulates; everything
/// before it is the base learner.
struct StMamlParams {
  Mlp learner;              // input dim = learner dims[0] + d_h
  Mlp encoder;              // per-pair encoder
  Mlp mu_head, sigma_head;  // shared between prior and posterior paths
  Tensor w1, w0;            // gate: [|theta_c| x d_z], [|theta_c|]
  Tensor beta1, beta0;      // feature map: [d_h x d_z], [d_h]
  ModelDims dims;

  std::size_t theta_c_size() const;
  std::vector<Tensor> all_params() const;
  /// Gate and z-dependent paths excluded: learner only.
  std::vector<Tensor> learner_params() const;
};

StMamlParams init_stmaml(const ModelDims& dims, std::size_t task_d_in, std::size_t task_d_out,
                         std::uint64_t seed);

/// Per-task adapted state: learner copy (base + gated task layer) plus the
/// augmented feature vector (absent when d_h = 0).
struct KnowledgeSet {
  Mlp learner;
  std::optional<Tensor> h;

  std::vector<Tensor> adaptable() const;
};

struct TrainingConfig {
  double gamma1 = 0.01;   // inner learning rate
  double gamma2 = 1e-3;   // outer learning rate
  std::size_t inner_steps = 5;
  std::size_t batch_tasks = 25;
  double kl_weight = 1.0;
  bool second_order = true;
  std::size_t iterations = 400;
  std::uint64_t seed = 0;
  bool adam = false;      // plain gradient descent unless enabled
  double clip_norm = 0.0; // global-norm gradient clip on the outer step; 0 disables
  /// Diagnostic reduction mode: z is the zero vector and the gate is held
  /// saturated, so the stochastic path drops out entirely.
  bool fixed_zero_z = false;
};

struct StepMetrics {
  double elbo = 0.0;
  double kl = 0.0;
  double train_mse = 0.0;
  double test_mse = 0.0;
};

// ---- stochastic task module ----
Tensor encode_pairs(const Mlp& phi, const Tensor& xs, const Tensor& ys);
Tensor aggregate(const Tensor& rows);
GaussianDiag prior_dist(const StMamlParams& params, const Task& task);
GaussianDiag posterior_dist(const StMamlParams& params, const Task& task);

// ---- knowledge tailoring ----
KnowledgeSet tailor_init(const StMamlParams& params, const Tensor& z);
Tensor augment_input(const StMamlParams& params, const Tensor& z);

// ---- inner loop ----
Tensor knowledge_forward(const KnowledgeSet& ks, const Tensor& xs);
Tensor inner_loss(const KnowledgeSet& ks, const Tensor& xs, const Tensor& ys, LossKind kind);
KnowledgeSet inner_adapt(const KnowledgeSet& ks0, const Task& task, const TrainingConfig& cfg);

// ---- training ----

/// Negated single-sample ELBO, for minimization. noise has dim d_z.
Tensor elbo_loss(const StMamlParams& params, const Task& task, const Tensor& noise,
                 const TrainingConfig& cfg, StepMetrics* metrics = nullptr);

class OuterOptimizer {
 public:
  struct State {
    std::size_t t = 0;
    std::vector<std::vector<double>> m, v;
  };

  OuterOptimizer(double lr, bool adam);
  /// Applies one update in place: values are replaced, leaves are refreshed.
  void step(std::vector<Tensor*> params, const std::vector<Tensor>& grads);
  State state() const;
  void set_state(State s);

 private:
  double lr_;
  bool adam_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

StepMetrics meta_train_step(StMamlParams& params, const std::vector<Task>& batch,
                            const TrainingConfig& cfg, std::uint64_t noise_seed,
                            OuterOptimizer& opt);

struct AdaptResult {
  Tensor predictions;  // [m x d_out], detached
  double train_loss = 0.0;
  double test_mse = 0.0;  // mean squared error or mean BCE per loss kind
};

/// Draws n_samples z from the prior, adapts each. The caller reports the
/// sample with the lowest train loss; the mean over samples is also
/// available from the per-sample records.
std::vector<AdaptResult> meta_test_adapt(const StMamlParams& params, const Task& task,
                                         std::size_t n_samples, const TrainingConfig& cfg,
                                         std::mt19937_64& rng);

// ---- MAML baseline ----
struct MamlParams {
  Mlp learner;
};

MamlParams init_maml(const std::vector<std::size_t>& learner_dims, std::uint64_t seed);

Tensor maml_task_loss(const MamlParams& params, const Task& task, const TrainingConfig& cfg,
                      StepMetrics* metrics = nullptr);
StepMetrics maml_train_step(MamlParams& params, const std::vector<Task>& batch,
                            const TrainingConfig& cfg, OuterOptimizer& opt);
AdaptResult maml_test_adapt(const MamlParams& params, const Task& task, const TrainingConfig& cfg);

/// Worker cap for per-task parallelism inside a batch; reads STMAML_THREADS.
std::size_t worker_threads();

}  // namespace stmaml

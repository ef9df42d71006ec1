#include "stmaml/engine.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

namespace stmaml {

namespace {
constexpr double kStdFloor = 1e-4;

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::runtime_error(std::string(what) + ": non-finite loss value");
}
}  // namespace

std::size_t StMamlParams::theta_c_size() const {
  const Tensor& w = learner.weights.back();
  return w.size() + learner.biases.back().size();
}

std::vector<Tensor> StMamlParams::all_params() const {
  std::vector<Tensor> p = learner.params();
  for (const auto& t : encoder.params()) p.push_back(t);
  for (const auto& t : mu_head.params()) p.push_back(t);
  for (const auto& t : sigma_head.params()) p.push_back(t);
  p.push_back(w1);
  p.push_back(w0);
  p.push_back(beta1);
  p.push_back(beta0);
  return p;
}

std::vector<Tensor> StMamlParams::learner_params() const { return learner.params(); }

StMamlParams init_stmaml(const ModelDims& dims, std::size_t task_d_in, std::size_t task_d_out,
                         std::uint64_t seed) {
  if (dims.d_h == static_cast<std::size_t>(-1))
    throw std::runtime_error("init_stmaml: d_h is unset");
  StMamlParams p;
  p.dims = dims;

  std::vector<std::size_t> learner_dims = dims.learner;
  learner_dims.front() = task_d_in + dims.d_h;
  p.learner = init_mlp(learner_dims, derive_seed(seed, 0));

  std::vector<std::size_t> enc_dims = dims.encoder;
  enc_dims.front() = task_d_in + task_d_out;
  p.encoder = init_mlp(enc_dims, derive_seed(seed, 1));

  const std::size_t d_r = enc_dims.back();
  std::vector<std::size_t> head_dims{d_r};
  for (auto h : dims.head_hidden) head_dims.push_back(h);
  head_dims.push_back(dims.d_z);
  p.mu_head = init_mlp(head_dims, derive_seed(seed, 2));
  p.sigma_head = init_mlp(head_dims, derive_seed(seed, 3));

  const std::size_t tc = learner_dims[learner_dims.size() - 2] * learner_dims.back() +
                         learner_dims.back();
  {
    std::mt19937_64 rng(derive_seed(seed, 4));
    const double bound = std::sqrt(6.0 / static_cast<double>(tc + dims.d_z));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(tc * dims.d_z);
    for (auto& x : w) x = u(rng);
    p.w1 = Tensor::leaf({tc, dims.d_z}, std::move(w));
    p.w0 = Tensor::leaf({tc}, std::vector<double>(tc, 0.0));
  }
  {
    std::mt19937_64 rng(derive_seed(seed, 5));
    const double bound = std::sqrt(6.0 / static_cast<double>(dims.d_h + dims.d_z));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> b(dims.d_h * dims.d_z);
    for (auto& x : b) x = u(rng);
    p.beta1 = Tensor::leaf({dims.d_h, dims.d_z}, std::move(b));
    p.beta0 = Tensor::leaf({dims.d_h}, std::vector<double>(dims.d_h, 0.0));
  }
  return p;
}

std::vector<Tensor> KnowledgeSet::adaptable() const {
  std::vector<Tensor> p = learner.params();
  if (h) p.push_back(*h);
  return p;
}

Tensor encode_pairs(const Mlp& phi, const Tensor& xs, const Tensor& ys) {
  if (xs.shape()[0] != ys.shape()[0])
    throw std::runtime_error("encode_pairs: xs and ys row counts differ");
  return mlp_forward(phi, concat(xs, ys));
}

Tensor aggregate(const Tensor& rows) {
  if (rows.shape().size() != 2 || rows.shape()[0] == 0)
    throw std::runtime_error("aggregate: non-empty [n x d] input required");
  return mean_axis0(rows);
}

namespace {
GaussianDiag dist_from_embedding(const StMamlParams& params, const Tensor& r) {
  Tensor r_row = reshape(r, {1, r.shape()[0]});
  Tensor mu = reshape(mlp_forward(params.mu_head, r_row), {params.dims.d_z});
  Tensor sg = reshape(mlp_forward(params.sigma_head, r_row), {params.dims.d_z});
  Tensor std = add_scalar(softplus(sg), kStdFloor);
  return GaussianDiag(mu, std);
}
}  // namespace

GaussianDiag prior_dist(const StMamlParams& params, const Task& task) {
  if (task.x_tr.shape()[0] == 0) throw std::runtime_error("prior_dist: empty training split");
  return dist_from_embedding(params, aggregate(encode_pairs(params.encoder, task.x_tr, task.y_tr)));
}

GaussianDiag posterior_dist(const StMamlParams& params, const Task& task) {
  if (task.x_tr.shape()[0] == 0) throw std::runtime_error("posterior_dist: empty training split");
  if (task.x_te.shape()[0] == 0)
    return prior_dist(params, task);  // empty test split: same set of pairs
  Tensor xs = vstack(task.x_tr, task.x_te);
  Tensor ys = vstack(task.y_tr, task.y_te);
  return dist_from_embedding(params, aggregate(encode_pairs(params.encoder, xs, ys)));
}

KnowledgeSet tailor_init(const StMamlParams& params, const Tensor& z) {
  const Tensor& w_last = params.learner.weights.back();
  const Tensor& b_last = params.learner.biases.back();
  const std::size_t wn = w_last.size(), bn = b_last.size();

  Tensor gate = sigmoid(add(matvec(params.w1, z), params.w0));
  Tensor theta_c = concat(reshape(w_last, {wn}), b_last);
  Tensor gated = mul(gate, theta_c);

  KnowledgeSet ks;
  ks.learner = params.learner;  // base layers shared; gradients still reach theta_b
  ks.learner.weights.back() = reshape(slice_last(gated, 0, wn), w_last.shape());
  ks.learner.biases.back() = slice_last(gated, wn, bn);
  return ks;
}

Tensor augment_input(const StMamlParams& params, const Tensor& z) {
  return add(matvec(params.beta1, z), params.beta0);
}

Tensor knowledge_forward(const KnowledgeSet& ks, const Tensor& xs) {
  Tensor input = xs;
  if (ks.h && ks.h->size() > 0) input = concat(xs, tile_rows(*ks.h, xs.shape()[0]));
  return mlp_forward(ks.learner, input);
}

Tensor inner_loss(const KnowledgeSet& ks, const Tensor& xs, const Tensor& ys, LossKind kind) {
  if (xs.shape()[0] == 0) throw std::runtime_error("inner_loss: empty split");
  Tensor pred = knowledge_forward(ks, xs);
  Tensor loss;
  if (kind == LossKind::SquaredError) {
    loss = mean_all(square(sub(pred, ys)));
  } else {
    // binary cross-entropy with logits: softplus(l) - l*y, averaged
    loss = mean_all(sub(softplus(pred), mul(pred, ys)));
  }
  check_finite(loss.item(), "inner_loss");
  return loss;
}

KnowledgeSet inner_adapt(const KnowledgeSet& ks0, const Task& task, const TrainingConfig& cfg) {
  KnowledgeSet ks = ks0;
  for (std::size_t step = 0; step < cfg.inner_steps; ++step) {
    Tensor loss = inner_loss(ks, task.x_tr, task.y_tr, task.loss_kind);
    if (!std::isfinite(loss.item()))
      throw std::runtime_error("inner_adapt: non-finite loss at step " + std::to_string(step));
    std::vector<Tensor> params = ks.adaptable();
    std::vector<Tensor> grads = grad(loss, params, cfg.second_order);

    KnowledgeSet next;
    next.learner.act = ks.learner.act;
    std::size_t gi = 0;
    for (std::size_t l = 0; l < ks.learner.weights.size(); ++l) {
      next.learner.weights.push_back(sub(ks.learner.weights[l], mul_scalar(grads[gi++], cfg.gamma1)));
      next.learner.biases.push_back(sub(ks.learner.biases[l], mul_scalar(grads[gi++], cfg.gamma1)));
    }
    if (ks.h) next.h = sub(*ks.h, mul_scalar(grads[gi++], cfg.gamma1));
    ks = std::move(next);
  }
  return ks;
}

namespace {
Tensor test_nll(const KnowledgeSet& ks, const Task& task, StepMetrics* metrics) {
  Tensor pred = knowledge_forward(ks, task.x_te);
  if (task.loss_kind == LossKind::SquaredError) {
    Tensor mse = mean_all(square(sub(pred, task.y_te)));
    if (metrics) metrics->test_mse = mse.item();
    return mul_scalar(mse, 0.5);  // unit-variance Gaussian likelihood
  }
  Tensor bce = mean_all(sub(softplus(pred), mul(pred, task.y_te)));
  if (metrics) metrics->test_mse = bce.item();
  return bce;
}
}  // namespace

Tensor elbo_loss(const StMamlParams& params, const Task& task, const Tensor& noise,
                 const TrainingConfig& cfg, StepMetrics* metrics) {
  Tensor z;
  Tensor kl_term;
  bool have_kl = false;
  if (cfg.fixed_zero_z) {
    z = Tensor::zeros({params.dims.d_z});
  } else {
    GaussianDiag prior = prior_dist(params, task);
    GaussianDiag posterior = posterior_dist(params, task);
    z = reparameterize_sample(posterior, noise);
    if (cfg.kl_weight > 0.0) {
      kl_term = kl_diag_gaussians(posterior, prior);
      have_kl = true;
    }
  }

  KnowledgeSet ks0 = tailor_init(params, z);
  if (params.dims.d_h > 0) ks0.h = augment_input(params, z);

  if (metrics) metrics->train_mse = inner_loss(ks0, task.x_tr, task.y_tr, task.loss_kind).item();
  KnowledgeSet ks1 = inner_adapt(ks0, task, cfg);

  Tensor loss = test_nll(ks1, task, metrics);
  if (have_kl) {
    if (metrics) metrics->kl = kl_term.item();
    loss = add(loss, mul_scalar(kl_term, cfg.kl_weight));
  }
  if (metrics) metrics->elbo = -loss.item();
  check_finite(loss.item(), "elbo_loss");
  return loss;
}

OuterOptimizer::OuterOptimizer(double lr, bool adam) : lr_(lr), adam_(adam) {}

OuterOptimizer::State OuterOptimizer::state() const { return {t_, m_, v_}; }

void OuterOptimizer::set_state(State s) {
  t_ = s.t;
  m_ = std::move(s.m);
  v_ = std::move(s.v);
}

void OuterOptimizer::step(std::vector<Tensor*> params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size())
    throw std::runtime_error("OuterOptimizer: parameter/gradient count mismatch");
  if (adam_ && m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i]->size(), 0.0);
      v_[i].assign(params[i]->size(), 0.0);
    }
  }
  ++t_;
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<double> v = params[i]->values();
    const std::vector<double>& g = grads[i].values();
    if (v.size() != g.size()) throw std::runtime_error("OuterOptimizer: gradient shape mismatch");
    if (adam_) {
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
      for (std::size_t j = 0; j < v.size(); ++j) {
        m_[i][j] = b1 * m_[i][j] + (1.0 - b1) * g[j];
        v_[i][j] = b2 * v_[i][j] + (1.0 - b2) * g[j] * g[j];
        v[j] -= lr_ * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + eps);
      }
    } else {
      for (std::size_t j = 0; j < v.size(); ++j) v[j] -= lr_ * g[j];
    }
    *params[i] = Tensor::leaf(params[i]->shape(), std::move(v));
  }
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("STMAML_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? hc : 1;
}

namespace {

std::vector<Tensor*> meta_param_ptrs(StMamlParams& p) {
  std::vector<Tensor*> ptrs;
  for (std::size_t l = 0; l < p.learner.weights.size(); ++l) {
    ptrs.push_back(&p.learner.weights[l]);
    ptrs.push_back(&p.learner.biases[l]);
  }
  auto push_mlp = [&](Mlp& m) {
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      ptrs.push_back(&m.weights[l]);
      ptrs.push_back(&m.biases[l]);
    }
  };
  push_mlp(p.encoder);
  push_mlp(p.mu_head);
  push_mlp(p.sigma_head);
  ptrs.push_back(&p.w1);
  ptrs.push_back(&p.w0);
  ptrs.push_back(&p.beta1);
  ptrs.push_back(&p.beta0);
  return ptrs;
}

void clip_gradients(std::vector<Tensor>& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (auto& g : grads) g = mul_scalar(g, scale);
}

/// Runs fn(i) for i in [0, n) across worker threads; exceptions rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_threads(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

StepMetrics meta_train_step(StMamlParams& params, const std::vector<Task>& batch,
                            const TrainingConfig& cfg, std::uint64_t noise_seed,
                            OuterOptimizer& opt) {
  if (batch.empty()) throw std::runtime_error("meta_train_step: empty batch");
  std::vector<Tensor*> ptrs = meta_param_ptrs(params);
  std::vector<Tensor> wrt;
  for (auto* p : ptrs) wrt.push_back(*p);

  const std::size_t m = batch.size();
  std::vector<std::vector<Tensor>> task_grads(m);
  std::vector<StepMetrics> task_metrics(m);

  parallel_for(m, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(noise_seed, i));
    Tensor noise = standard_normal(params.dims.d_z, rng);
    Tensor loss = elbo_loss(params, batch[i], noise, cfg, &task_metrics[i]);
    task_grads[i] = grad(loss, wrt);
  });

  // Fixed task-index reduction order keeps training bit-reproducible.
  std::vector<Tensor> avg = task_grads[0];
  for (std::size_t i = 1; i < m; ++i)
    for (std::size_t j = 0; j < avg.size(); ++j) avg[j] = add(avg[j], task_grads[i][j]);
  for (auto& g : avg) g = mul_scalar(g, 1.0 / static_cast<double>(m));
  clip_gradients(avg, cfg.clip_norm);

  opt.step(ptrs, avg);

  StepMetrics out;
  for (const auto& tm : task_metrics) {
    out.elbo += tm.elbo / static_cast<double>(m);
    out.kl += tm.kl / static_cast<double>(m);
    out.train_mse += tm.train_mse / static_cast<double>(m);
    out.test_mse += tm.test_mse / static_cast<double>(m);
  }
  return out;
}

std::vector<AdaptResult> meta_test_adapt(const StMamlParams& params, const Task& task,
                                         std::size_t n_samples, const TrainingConfig& cfg,
                                         std::mt19937_64& rng) {
  if (task.x_tr.shape()[0] == 0) throw std::runtime_error("meta_test_adapt: empty training split");
  if (n_samples < 1) throw std::runtime_error("meta_test_adapt: n_samples must be >= 1");

  TrainingConfig eval_cfg = cfg;
  eval_cfg.second_order = false;  // no outer gradient at test time

  GaussianDiag prior = prior_dist(params, task);
  std::vector<AdaptResult> results;
  results.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    Tensor noise = cfg.fixed_zero_z ? Tensor::zeros({params.dims.d_z})
                                    : standard_normal(params.dims.d_z, rng);
    Tensor z = reparameterize_sample(prior, noise);
    KnowledgeSet ks0 = tailor_init(params, z);
    if (params.dims.d_h > 0) ks0.h = augment_input(params, z);
    KnowledgeSet ks1 = inner_adapt(ks0, task, eval_cfg);

    AdaptResult r;
    r.train_loss = inner_loss(ks1, task.x_tr, task.y_tr, task.loss_kind).item();
    Tensor pred = knowledge_forward(ks1, task.x_te);
    if (task.loss_kind == LossKind::SquaredError)
      r.test_mse = mean_all(square(sub(pred, task.y_te))).item();
    else
      r.test_mse = mean_all(sub(softplus(pred), mul(pred, task.y_te))).item();
    r.predictions = pred.detach();
    results.push_back(std::move(r));
  }
  return results;
}

MamlParams init_maml(const std::vector<std::size_t>& learner_dims, std::uint64_t seed) {
  MamlParams p;
  p.learner = init_mlp(learner_dims, derive_seed(seed, 0));
  return p;
}

Tensor maml_task_loss(const MamlParams& params, const Task& task, const TrainingConfig& cfg,
                      StepMetrics* metrics) {
  KnowledgeSet ks0;
  ks0.learner = params.learner;
  if (metrics) metrics->train_mse = inner_loss(ks0, task.x_tr, task.y_tr, task.loss_kind).item();
  KnowledgeSet ks1 = inner_adapt(ks0, task, cfg);
  Tensor loss = test_nll(ks1, task, metrics);
  if (metrics) metrics->elbo = -loss.item();
  return loss;
}

StepMetrics maml_train_step(MamlParams& params, const std::vector<Task>& batch,
                            const TrainingConfig& cfg, OuterOptimizer& opt) {
  if (batch.empty()) throw std::runtime_error("maml_train_step: empty batch");
  std::vector<Tensor*> ptrs;
  for (std::size_t l = 0; l < params.learner.weights.size(); ++l) {
    ptrs.push_back(&params.learner.weights[l]);
    ptrs.push_back(&params.learner.biases[l]);
  }
  std::vector<Tensor> wrt;
  for (auto* p : ptrs) wrt.push_back(*p);

  const std::size_t m = batch.size();
  std::vector<std::vector<Tensor>> task_grads(m);
  std::vector<StepMetrics> task_metrics(m);
  parallel_for(m, [&](std::size_t i) {
    Tensor loss = maml_task_loss(params, batch[i], cfg, &task_metrics[i]);
    task_grads[i] = grad(loss, wrt);
  });

  std::vector<Tensor> avg = task_grads[0];
  for (std::size_t i = 1; i < m; ++i)
    for (std::size_t j = 0; j < avg.size(); ++j) avg[j] = add(avg[j], task_grads[i][j]);
  for (auto& g : avg) g = mul_scalar(g, 1.0 / static_cast<double>(m));
  clip_gradients(avg, cfg.clip_norm);
  opt.step(ptrs, avg);

  StepMetrics out;
  for (const auto& tm : task_metrics) {
    out.elbo += tm.elbo / static_cast<double>(m);
    out.train_mse += tm.train_mse / static_cast<double>(m);
    out.test_mse += tm.test_mse / static_cast<double>(m);
  }
  return out;
}

AdaptResult maml_test_adapt(const MamlParams& params, const Task& task, const TrainingConfig& cfg) {
  TrainingConfig eval_cfg = cfg;
  eval_cfg.second_order = false;
  KnowledgeSet ks0;
  ks0.learner = params.learner;
  KnowledgeSet ks1 = inner_adapt(ks0, task, eval_cfg);

  AdaptResult r;
  r.train_loss = inner_loss(ks1, task.x_tr, task.y_tr, task.loss_kind).item();
  Tensor pred = knowledge_forward(ks1, task.x_te);
  if (task.loss_kind == LossKind::SquaredError)
    r.test_mse = mean_all(square(sub(pred, task.y_te))).item();
  else
    r.test_mse = mean_all(sub(softplus(pred), mul(pred, task.y_te))).item();
  r.predictions = pred.detach();
  return r;
}

}  // namespace stmaml

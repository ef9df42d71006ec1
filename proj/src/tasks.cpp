#include "stmaml/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace stmaml {

namespace {

struct Coefs {
  double a = 0, b = 0, c = 0, d = 0, w = 0;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return u(rng);
}

Coefs draw_coefs(Family f, std::mt19937_64& rng) {
  Coefs k;
  switch (f) {
    case Family::Sinusoid:
      k.a = uniform(rng, 0.1, 5.0);
      k.b = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      k.w = uniform(rng, 0.8, 1.2);
      break;
    case Family::Line:
      k.a = uniform(rng, -3.0, 3.0);
      k.b = uniform(rng, -3.0, 3.0);
      break;
    case Family::Quadratic:
      k.a = uniform(rng, -0.2, 0.2);
      k.b = uniform(rng, -2.0, 2.0);
      k.c = uniform(rng, -3.0, 3.0);
      break;
    case Family::Cubic:
      k.a = uniform(rng, -0.1, 0.1);
      k.b = uniform(rng, -0.2, 0.2);
      k.c = uniform(rng, -2.0, 2.0);
      k.d = uniform(rng, -3.0, 3.0);
      break;
    case Family::QuadraticSurface:
      k.a = uniform(rng, -1.0, 1.0);
      k.b = uniform(rng, -1.0, 1.0);
      break;
    case Family::Ripple:
      k.a = uniform(rng, -0.2, 0.2);
      k.b = uniform(rng, -3.0, 3.0);
      break;
  }
  return k;
}

bool uses_both_inputs(Family f) {
  return f == Family::QuadraticSurface || f == Family::Ripple;
}

double evaluate_family(Family f, const Coefs& k, double x1, double x2) {
  switch (f) {
    case Family::Sinusoid: return k.a * std::sin(k.w * x1 + k.b);
    case Family::Line: return k.a * x1 + k.b;
    case Family::Quadratic: return k.a * x1 * x1 + k.b * x1 + k.c;
    case Family::Cubic: return k.a * x1 * x1 * x1 + k.b * x1 * x1 + k.c * x1 + k.d;
    case Family::QuadraticSurface: return k.a * x1 * x1 + k.b * x2 * x2;
    case Family::Ripple: return std::sin(-k.a * (x1 * x1 + x2 * x2)) + k.b;
  }
  throw std::runtime_error("evaluate_family: unknown family");
}

void draw_split(Family f, const Coefs& k, double noise_std, std::size_t n, std::mt19937_64& rng,
                std::vector<double>& xs, std::vector<double>& ys) {
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double x1 = uniform(rng, 0.0, 5.0);
    double x2 = uses_both_inputs(f) ? uniform(rng, 0.0, 5.0) : 1.0;
    double y = evaluate_family(f, k, x1, x2);
    if (noise_std > 0.0) y += noise_std * noise(rng);
    xs.push_back(x1);
    xs.push_back(x2);
    ys.push_back(y);
  }
}

nlohmann::json matrix_json(const Tensor& t) {
  const std::size_t n = t.shape()[0], d = t.shape()[1];
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < d; ++j) row.push_back(t.values()[i * d + j]);
    rows.push_back(std::move(row));
  }
  return rows;
}

Tensor matrix_from_json(const nlohmann::json& rows) {
  const std::size_t n = rows.size();
  const std::size_t d = n ? rows[0].size() : 0;
  std::vector<double> v;
  v.reserve(n * d);
  for (const auto& row : rows)
    for (const auto& x : row) v.push_back(x.get<double>());
  return Tensor::from({n, d}, std::move(v));
}

}  // namespace

Family family_from_string(const std::string& s) {
  if (s == "sinusoid") return Family::Sinusoid;
  if (s == "line") return Family::Line;
  if (s == "quadratic") return Family::Quadratic;
  if (s == "cubic") return Family::Cubic;
  if (s == "quadratic_surface") return Family::QuadraticSurface;
  if (s == "ripple") return Family::Ripple;
  throw std::runtime_error("unknown function family: " + s);
}

std::string to_string(Family f) {
  switch (f) {
    case Family::Sinusoid: return "sinusoid";
    case Family::Line: return "line";
    case Family::Quadratic: return "quadratic";
    case Family::Cubic: return "cubic";
    case Family::QuadraticSurface: return "quadratic_surface";
    case Family::Ripple: return "ripple";
  }
  return "?";
}

Task sample_2d_regression_task(const EpisodeConfig& cfg, std::mt19937_64& rng) {
  if (cfg.families.empty())
    throw std::runtime_error("sample_2d_regression_task: empty family set");
  std::uniform_int_distribution<std::size_t> pick(0, cfg.families.size() - 1);
  Family f = cfg.families[pick(rng)];
  Coefs k = draw_coefs(f, rng);

  std::vector<double> xtr, ytr, xte, yte;
  draw_split(f, k, cfg.noise_std, cfg.shots, rng, xtr, ytr);
  draw_split(f, k, cfg.noise_std, cfg.queries, rng, xte, yte);

  Task t;
  t.x_tr = Tensor::from({cfg.shots, 2}, std::move(xtr));
  t.y_tr = Tensor::from({cfg.shots, 1}, std::move(ytr));
  t.x_te = Tensor::from({cfg.queries, 2}, std::move(xte));
  t.y_te = Tensor::from({cfg.queries, 1}, std::move(yte));
  t.loss_kind = LossKind::SquaredError;
  t.family_id = static_cast<int>(f);
  return t;
}

Task sample_image_completion_task(const Tensor& image, std::size_t shots, std::mt19937_64& rng) {
  if (image.shape() != Shape{28, 28})
    throw std::runtime_error("sample_image_completion_task: image must be 28x28");
  const std::size_t total = 784;
  if (shots < 1 || shots > total)
    throw std::runtime_error("sample_image_completion_task: shots must be in [1," +
                             std::to_string(total) + "]");
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);

  auto fill = [&](std::size_t begin, std::size_t end, std::vector<double>& xs,
                  std::vector<double>& ys) {
    for (std::size_t p = begin; p < end; ++p) {
      const std::size_t r = idx[p] / 28, c = idx[p] % 28;
      xs.push_back(static_cast<double>(r) / 27.0);
      xs.push_back(static_cast<double>(c) / 27.0);
      ys.push_back(image.values()[idx[p]]);
    }
  };
  std::vector<double> xtr, ytr, xte, yte;
  fill(0, shots, xtr, ytr);
  fill(shots, total, xte, yte);

  Task t;
  t.x_tr = Tensor::from({shots, 2}, std::move(xtr));
  t.y_tr = Tensor::from({shots, 1}, std::move(ytr));
  t.x_te = Tensor::from({total - shots, 2}, std::move(xte));
  t.y_te = Tensor::from({total - shots, 1}, std::move(yte));
  t.loss_kind = LossKind::Bernoulli;
  return t;
}

std::vector<Task> sample_episode_batch(const EpisodeConfig& cfg, std::size_t batch_size,
                                       std::mt19937_64& rng) {
  if (batch_size < 1) throw std::runtime_error("sample_episode_batch: batch_size must be >= 1");
  std::vector<Task> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) batch.push_back(sample_2d_regression_task(cfg, rng));
  return batch;
}

Task sample_2d_regression_curve_task(const EpisodeConfig& cfg, std::mt19937_64& rng,
                                     std::size_t grid_points) {
  if (cfg.families.empty() || grid_points < 2)
    throw std::runtime_error("sample_2d_regression_curve_task: bad arguments");
  std::uniform_int_distribution<std::size_t> pick(0, cfg.families.size() - 1);
  Family f = cfg.families[pick(rng)];
  Coefs k = draw_coefs(f, rng);

  // Train points keep x2 = 1 here as well so they lie on the plotted slice.
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> xtr, ytr;
  for (std::size_t i = 0; i < cfg.shots; ++i) {
    double x1 = uniform(rng, 0.0, 5.0);
    double y = evaluate_family(f, k, x1, 1.0);
    if (cfg.noise_std > 0.0) y += cfg.noise_std * noise(rng);
    xtr.push_back(x1);
    xtr.push_back(1.0);
    ytr.push_back(y);
  }
  std::vector<double> xte, yte;
  for (std::size_t i = 0; i < grid_points; ++i) {
    double x1 = 5.0 * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    xte.push_back(x1);
    xte.push_back(1.0);
    yte.push_back(evaluate_family(f, k, x1, 1.0));
  }

  Task t;
  t.x_tr = Tensor::from({cfg.shots, 2}, std::move(xtr));
  t.y_tr = Tensor::from({cfg.shots, 1}, std::move(ytr));
  t.x_te = Tensor::from({grid_points, 2}, std::move(xte));
  t.y_te = Tensor::from({grid_points, 1}, std::move(yte));
  t.loss_kind = LossKind::SquaredError;
  t.family_id = static_cast<int>(f);
  return t;
}

void dump_tasks_jsonl(const std::vector<Task>& tasks, std::ostream& out) {
  for (const auto& t : tasks) {
    nlohmann::json j;
    j["x_tr"] = matrix_json(t.x_tr);
    j["y_tr"] = matrix_json(t.y_tr);
    j["x_te"] = matrix_json(t.x_te);
    j["y_te"] = matrix_json(t.y_te);
    j["family_id"] = t.family_id;
    j["loss_kind"] = t.loss_kind == LossKind::SquaredError ? "squared_error" : "bernoulli";
    out << j.dump() << "\n";
  }
}

std::vector<Task> load_tasks_jsonl(std::istream& in) {
  std::vector<Task> tasks;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    Task t;
    t.x_tr = matrix_from_json(j.at("x_tr"));
    t.y_tr = matrix_from_json(j.at("y_tr"));
    t.x_te = matrix_from_json(j.at("x_te"));
    t.y_te = matrix_from_json(j.at("y_te"));
    t.family_id = j.value("family_id", -1);
    t.loss_kind =
        j.value("loss_kind", "squared_error") == "bernoulli" ? LossKind::Bernoulli : LossKind::SquaredError;
    tasks.push_back(std::move(t));
  }
  return tasks;
}

}  // namespace stmaml

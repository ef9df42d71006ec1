#include "stmaml/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "stmaml/checkpoint.hpp"

namespace fs = std::filesystem;

namespace stmaml {

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) v.push_back(std::stoul(tok));
  return v;
}

std::string join_families(const std::vector<Family>& fams) {
  std::string s;
  for (std::size_t i = 0; i < fams.size(); ++i) s += (i ? "," : "") + to_string(fams[i]);
  return s;
}

std::vector<Family> parse_families(const std::string& s) {
  std::vector<Family> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) v.push_back(family_from_string(tok));
  return v;
}

bool parse_bool(const std::string& s) { return s == "1" || s == "true" || s == "yes"; }

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::map<std::string, std::string> ExperimentConfig::to_flat() const {
  std::map<std::string, std::string> kv;
  kv["experiment"] = experiment;
  kv["algorithm"] = algorithm;
  kv["eval_tasks"] = std::to_string(eval_tasks);
  kv["eval_samples"] = std::to_string(eval_samples);
  kv["checkpoint_every"] = std::to_string(checkpoint_every);
  kv["output_dir"] = output_dir;
  kv["gsod_dir"] = gsod_dir;
  kv["idx_images"] = idx_images;
  kv["resume_from"] = resume_from;
  kv["train.gamma1"] = fmt_double(train.gamma1);
  kv["train.gamma2"] = fmt_double(train.gamma2);
  kv["train.inner_steps"] = std::to_string(train.inner_steps);
  kv["train.batch_tasks"] = std::to_string(train.batch_tasks);
  kv["train.kl_weight"] = fmt_double(train.kl_weight);
  kv["train.second_order"] = train.second_order ? "true" : "false";
  kv["train.iterations"] = std::to_string(train.iterations);
  kv["train.seed"] = std::to_string(train.seed);
  kv["train.adam"] = train.adam ? "true" : "false";
  kv["train.clip_norm"] = fmt_double(train.clip_norm);
  kv["train.fixed_zero_z"] = train.fixed_zero_z ? "true" : "false";
  kv["episode.shots"] = std::to_string(episode.shots);
  kv["episode.queries"] = std::to_string(episode.queries);
  kv["episode.noise_std"] = fmt_double(episode.noise_std);
  kv["episode.families"] = join_families(episode.families);
  kv["episode.seed"] = std::to_string(episode.seed);
  kv["dims.learner"] = join_sizes(dims.learner);
  kv["dims.encoder"] = join_sizes(dims.encoder);
  kv["dims.head_hidden"] = join_sizes(dims.head_hidden);
  kv["dims.d_z"] = std::to_string(dims.d_z);
  kv["dims.d_h"] = std::to_string(dims.d_h);
  return kv;
}

ExperimentConfig ExperimentConfig::from_flat(const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  for (const auto& [k, v] : kv) {
    if (k == "experiment") cfg.experiment = v;
    else if (k == "algorithm") cfg.algorithm = v;
    else if (k == "eval_tasks") cfg.eval_tasks = std::stoul(v);
    else if (k == "eval_samples") cfg.eval_samples = std::stoul(v);
    else if (k == "checkpoint_every") cfg.checkpoint_every = std::stoul(v);
    else if (k == "output_dir") cfg.output_dir = v;
    else if (k == "gsod_dir") cfg.gsod_dir = v;
    else if (k == "idx_images") cfg.idx_images = v;
    else if (k == "resume_from") cfg.resume_from = v;
    else if (k == "train.gamma1") cfg.train.gamma1 = std::stod(v);
    else if (k == "train.gamma2") cfg.train.gamma2 = std::stod(v);
    else if (k == "train.inner_steps") cfg.train.inner_steps = std::stoul(v);
    else if (k == "train.batch_tasks") cfg.train.batch_tasks = std::stoul(v);
    else if (k == "train.kl_weight") cfg.train.kl_weight = std::stod(v);
    else if (k == "train.second_order") cfg.train.second_order = parse_bool(v);
    else if (k == "train.iterations") cfg.train.iterations = std::stoul(v);
    else if (k == "train.seed") cfg.train.seed = std::stoull(v);
    else if (k == "train.adam") cfg.train.adam = parse_bool(v);
    else if (k == "train.clip_norm") cfg.train.clip_norm = std::stod(v);
    else if (k == "train.fixed_zero_z") cfg.train.fixed_zero_z = parse_bool(v);
    else if (k == "episode.shots") cfg.episode.shots = std::stoul(v);
    else if (k == "episode.queries") cfg.episode.queries = std::stoul(v);
    else if (k == "episode.noise_std") cfg.episode.noise_std = std::stod(v);
    else if (k == "episode.families") cfg.episode.families = parse_families(v);
    else if (k == "episode.seed") cfg.episode.seed = std::stoull(v);
    else if (k == "dims.learner") cfg.dims.learner = parse_sizes(v);
    else if (k == "dims.encoder") cfg.dims.encoder = parse_sizes(v);
    else if (k == "dims.head_hidden") cfg.dims.head_hidden = parse_sizes(v);
    else if (k == "dims.d_z") cfg.dims.d_z = std::stoul(v);
    else if (k == "dims.d_h") cfg.dims.d_h = std::stoul(v);
    else throw std::runtime_error("unknown config key: " + k);
  }
  cfg.finalize();
  return cfg;
}

void ExperimentConfig::finalize() {
  if (experiment == "regression2d" || experiment == "image_completion") {
    if (dims.learner.empty()) dims.learner = {2, 40, 40, 1};
    if (dims.encoder.empty()) dims.encoder = {3, 80, 80};
    if (dims.head_hidden.empty()) dims.head_hidden = {40};
    if (dims.d_h == std::size_t(-1)) dims.d_h = 10;
  } else if (experiment == "weather") {
    if (dims.learner.empty()) dims.learner = {16, 100, 100, 1};
    if (dims.encoder.empty()) dims.encoder = {17, 40, 80, 200};
    if (dims.head_hidden.empty()) dims.head_hidden = {80};
    if (dims.d_h == std::size_t(-1)) dims.d_h = 20;
  } else {
    throw std::runtime_error("unknown experiment: " + experiment);
  }
}

std::size_t ExperimentConfig::task_d_in() const {
  if (experiment == "weather") return 16;
  return 2;
}

std::size_t ExperimentConfig::task_d_out() const { return 1; }

std::string ExperimentConfig::hash() const {
  // FNV-1a over the canonical flat form
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [k, v] : to_flat()) {
    for (char c : k + "=" + v + ";") {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentConfig load_config_file(const std::string& path,
                                  const std::map<std::string, std::string>& overrides) {
  std::map<std::string, std::string> kv;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    for (auto& [k, v] : j.items()) {
      if (v.is_string()) kv[k] = v.get<std::string>();
      else kv[k] = v.dump();
    }
  }
  for (const auto& [k, v] : overrides) kv[k] = v;  // flag > file > default
  return ExperimentConfig::from_flat(kv);
}

// ---- task source ----

TaskSource::TaskSource(const ExperimentConfig& cfg) : cfg_(cfg) {
  if (cfg.experiment == "weather") {
    if (cfg.gsod_dir.empty()) throw std::runtime_error("weather experiment requires gsod_dir");
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(cfg.gsod_dir))
      if (e.is_regular_file() && e.path().extension() == ".csv") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
      std::ifstream in(p);
      StationYearFile f = parse_gsod_csv(in, p.stem().string());
      if (f.eligible()) stations_.push_back(std::move(f));
    }
    if (stations_.empty())
      throw std::runtime_error("no eligible station-year files under " + cfg.gsod_dir);
  } else if (cfg.experiment == "image_completion") {
    if (cfg.idx_images.empty())
      throw std::runtime_error("image_completion experiment requires idx_images");
    std::stringstream ss(cfg.idx_images);
    std::string path;
    while (std::getline(ss, path, ',')) {
      if (path.empty()) continue;
      std::ifstream in(path, std::ios::binary);
      if (!in) throw std::runtime_error("cannot open IDX file " + path);
      for (auto& img : parse_idx_images(in)) images_.push_back(std::move(img));
    }
    if (images_.empty()) throw std::runtime_error("no images loaded from " + cfg.idx_images);
  }
}

Task TaskSource::sample(std::mt19937_64& rng) const {
  if (cfg_.experiment == "regression2d") return sample_2d_regression_task(cfg_.episode, rng);
  if (cfg_.experiment == "weather") {
    std::uniform_int_distribution<std::size_t> pick(0, stations_.size() - 1);
    return sample_weather_task(stations_[pick(rng)], cfg_.episode.shots, cfg_.episode.queries, rng);
  }
  std::uniform_int_distribution<std::size_t> pick(0, images_.size() - 1);
  return sample_image_completion_task(images_[pick(rng)], cfg_.episode.shots, rng);
}

std::vector<Task> TaskSource::batch(std::size_t n, std::mt19937_64& rng) const {
  std::vector<Task> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample(rng));
  return out;
}

std::size_t TaskSource::corpus_size() const {
  if (cfg_.experiment == "weather") return stations_.size();
  if (cfg_.experiment == "image_completion") return images_.size();
  return 0;
}

// ---- training ----

namespace {

std::string checkpoint_path(const std::string& dir, std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%06zu.json", step);
  return dir + "/checkpoints/" + buf;
}

std::vector<std::size_t> maml_learner_dims(const ExperimentConfig& cfg) {
  std::vector<std::size_t> dims = cfg.dims.learner;
  dims.front() = cfg.task_d_in();  // no augmentation for the baseline
  return dims;
}

void append_metrics(std::ofstream& csv, std::size_t step, const StepMetrics& m) {
  csv << step << "," << fmt_double(m.elbo) << "," << fmt_double(m.kl) << ","
      << fmt_double(m.train_mse) << "," << fmt_double(m.test_mse) << "\n";
  csv.flush();
}

}  // namespace

std::string run_train(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.finalize();
  fs::create_directories(cfg.output_dir + "/checkpoints");
  TaskSource source(cfg);

  const std::string hash = cfg.hash();
  CheckpointHeader header;
  header.algorithm = cfg.algorithm;
  header.task_d_in = cfg.task_d_in();
  header.task_d_out = cfg.task_d_out();
  header.config_hash = hash;

  std::size_t start_step = 0;
  StMamlParams st_params;
  MamlParams maml_params;
  if (!cfg.resume_from.empty()) {
    std::ifstream in(cfg.resume_from);
    if (!in) throw std::runtime_error("cannot open checkpoint " + cfg.resume_from);
    CheckpointHeader h;
    if (cfg.algorithm == "stmaml") st_params = load_stmaml_checkpoint(in, &h);
    else maml_params = load_maml_checkpoint(in, &h);
    start_step = h.step;
  } else if (cfg.algorithm == "stmaml") {
    st_params = init_stmaml(cfg.dims, cfg.task_d_in(), cfg.task_d_out(), cfg.train.seed);
  } else {
    maml_params = init_maml(maml_learner_dims(cfg), cfg.train.seed);
  }

  OuterOptimizer opt(cfg.train.gamma2, cfg.train.adam);
  if (!cfg.resume_from.empty() && cfg.train.adam) {
    const std::string opt_path = cfg.resume_from + ".opt";
    std::ifstream in(opt_path);
    if (in) {
      nlohmann::json j = nlohmann::json::parse(in);
      OuterOptimizer::State s;
      s.t = j.at("t").get<std::size_t>();
      s.m = j.at("m").get<std::vector<std::vector<double>>>();
      s.v = j.at("v").get<std::vector<std::vector<double>>>();
      opt.set_state(std::move(s));
    }
  }

  std::ofstream csv(cfg.output_dir + "/metrics.csv",
                    start_step ? std::ios::app : std::ios::trunc);
  if (start_step == 0) csv << "step,elbo,kl,train_mse,test_mse\n";

  auto save = [&](std::size_t step) {
    header.step = step;
    const std::string path = checkpoint_path(cfg.output_dir, step);
    std::ofstream out(path);
    if (cfg.algorithm == "stmaml") save_checkpoint(st_params, header, out);
    else save_checkpoint(maml_params, header, maml_learner_dims(cfg), out);
    if (cfg.train.adam) {
      nlohmann::json j;
      OuterOptimizer::State s = opt.state();
      j["t"] = s.t;
      j["m"] = s.m;
      j["v"] = s.v;
      std::ofstream sout(path + ".opt");
      sout << j.dump() << "\n";
    }
    return path;
  };

  std::string last_good = save(start_step);
  for (std::size_t step = start_step; step < cfg.train.iterations; ++step) {
    std::mt19937_64 task_rng(derive_seed(cfg.train.seed, 2 * step + 1));
    std::vector<Task> batch = source.batch(cfg.train.batch_tasks, task_rng);
    StepMetrics m;
    try {
      if (cfg.algorithm == "stmaml")
        m = meta_train_step(st_params, batch, cfg.train, derive_seed(cfg.train.seed, 2 * step + 2),
                            opt);
      else
        m = maml_train_step(maml_params, batch, cfg.train, opt);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "training aborted at step %zu: %s\nlast good checkpoint: %s\n",
                   step + 1, e.what(), last_good.c_str());
      return last_good;
    }
    append_metrics(csv, step + 1, m);
    if ((step + 1) % cfg.checkpoint_every == 0 || step + 1 == cfg.train.iterations)
      last_good = save(step + 1);
  }
  return last_good;
}

// ---- evaluation ----

EvalReport run_eval(const std::string& checkpoint_path, const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.finalize();
  const auto t0 = std::chrono::steady_clock::now();
  TaskSource source(cfg);

  std::ifstream in(checkpoint_path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + checkpoint_path);
  StMamlParams st_params;
  MamlParams maml_params;
  if (cfg.algorithm == "stmaml") {
    st_params = load_stmaml_checkpoint(in);
    const std::size_t want = cfg.task_d_in() + st_params.dims.d_h;
    if (st_params.learner.in_dim() != want)
      throw std::runtime_error("checkpoint learner input dim " +
                               std::to_string(st_params.learner.in_dim()) +
                               " does not match config (" + std::to_string(want) + ")");
  } else {
    maml_params = load_maml_checkpoint(in);
    if (maml_params.learner.in_dim() != cfg.task_d_in())
      throw std::runtime_error("checkpoint learner input dim does not match config");
  }

  EvalReport report;
  report.config_hash = cfg.hash();
  report.seed = cfg.train.seed;
  report.per_task.resize(cfg.eval_tasks);

  std::vector<Task> tasks;
  tasks.reserve(cfg.eval_tasks);
  {
    std::mt19937_64 rng(derive_seed(cfg.train.seed, 0x9e37));
    for (std::size_t i = 0; i < cfg.eval_tasks; ++i) tasks.push_back(source.sample(rng));
  }

  std::vector<std::thread> threads;
  const std::size_t workers = std::min(worker_threads(), cfg.eval_tasks);
  auto eval_one = [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(cfg.train.seed, 0xe7a1 + i));
    if (cfg.algorithm == "stmaml") {
      auto results = meta_test_adapt(st_params, tasks[i], cfg.eval_samples, cfg.train, rng);
      const auto best = std::min_element(results.begin(), results.end(),
                                         [](const AdaptResult& a, const AdaptResult& b) {
                                           return a.train_loss < b.train_loss;
                                         });
      report.per_task[i] = best->test_mse;
    } else {
      report.per_task[i] = maml_test_adapt(maml_params, tasks[i], cfg.train).test_mse;
    }
  };
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < cfg.eval_tasks; i += workers) eval_one(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  double sum = 0.0;
  for (double v : report.per_task) sum += v;
  report.mean_metric = sum / static_cast<double>(cfg.eval_tasks);
  double sq = 0.0;
  for (double v : report.per_task) sq += (v - report.mean_metric) * (v - report.mean_metric);
  const double n = static_cast<double>(cfg.eval_tasks);
  report.std_error = n > 1 ? std::sqrt(sq / (n - 1)) / std::sqrt(n) : 0.0;
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

void write_report(const EvalReport& report, std::ostream& out) {
  nlohmann::json j;
  j["mean_metric"] = report.mean_metric;
  j["std_error"] = report.std_error;
  j["per_task"] = report.per_task;
  j["config_hash"] = report.config_hash;
  j["seed"] = report.seed;
  // wall clock deliberately omitted: equal hash + seed must give
  // byte-identical reports
  out << j.dump(2) << "\n";
}

void dump_predictions(const std::string& checkpoint_path, const ExperimentConfig& cfg_in,
                      std::size_t n_tasks, std::size_t n_samples, std::ostream& out) {
  ExperimentConfig cfg = cfg_in;
  cfg.finalize();
  if (cfg.experiment != "regression2d")
    throw std::runtime_error("dump_predictions supports the regression2d experiment only");

  std::ifstream in(checkpoint_path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + checkpoint_path);
  StMamlParams st_params;
  MamlParams maml_params;
  if (cfg.algorithm == "stmaml") st_params = load_stmaml_checkpoint(in);
  else maml_params = load_maml_checkpoint(in);

  const std::size_t grid = 100;
  std::mt19937_64 rng(derive_seed(cfg.train.seed, 0xd01));
  for (std::size_t t = 0; t < n_tasks; ++t) {
    Task task = sample_2d_regression_curve_task(cfg.episode, rng, grid);
    nlohmann::json j;
    nlohmann::json xtr = nlohmann::json::array(), ytr = nlohmann::json::array();
    for (std::size_t i = 0; i < task.shots(); ++i) {
      xtr.push_back(task.x_tr.values()[2 * i]);
      ytr.push_back(task.y_tr.values()[i]);
    }
    j["x_tr"] = std::move(xtr);
    j["y_tr"] = std::move(ytr);
    nlohmann::json gx = nlohmann::json::array(), gy = nlohmann::json::array();
    for (std::size_t i = 0; i < grid; ++i) {
      gx.push_back(task.x_te.values()[2 * i]);
      gy.push_back(task.y_te.values()[i]);
    }
    j["grid"] = std::move(gx);
    j["y_true"] = std::move(gy);
    j["family_id"] = task.family_id;

    nlohmann::json samples = nlohmann::json::array();
    if (cfg.algorithm == "stmaml") {
      auto results = meta_test_adapt(st_params, task, n_samples, cfg.train, rng);
      for (const auto& r : results) {
        nlohmann::json curve = nlohmann::json::array();
        for (double v : r.predictions.values()) curve.push_back(v);
        samples.push_back(std::move(curve));
      }
    } else {
      AdaptResult r = maml_test_adapt(maml_params, task, cfg.train);
      nlohmann::json curve = nlohmann::json::array();
      for (double v : r.predictions.values()) curve.push_back(v);
      samples.push_back(std::move(curve));
    }
    j["samples"] = std::move(samples);
    out << j.dump() << "\n";
  }
}

}  // namespace stmaml

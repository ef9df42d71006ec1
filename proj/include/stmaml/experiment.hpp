#pragma once

#include <map>
#include <string>
#include <vector>

#include "stmaml/engine.hpp"
#include "stmaml/gsod.hpp"

namespace stmaml {

struct ExperimentConfig {
  std::string experiment = "regression2d";  // weather | image_completion
  std::string algorithm = "stmaml";         // maml
  TrainingConfig train;
  EpisodeConfig episode;
  ModelDims dims;
  std::size_t eval_tasks = 1000;
  std::size_t eval_samples = 10;
  std::size_t checkpoint_every = 100;
  std::string output_dir = "out";
  std::string gsod_dir;    // raw station-year CSVs (weather)
  std::string idx_images;  // comma-separated IDX files (image completion)
  std::string resume_from;

  /// Flat dotted-key view, e.g. "train.gamma1". Values win in the order
  /// flag > file > default.
  static ExperimentConfig from_flat(const std::map<std::string, std::string>& kv);
  std::map<std::string, std::string> to_flat() const;
  std::string hash() const;

  /// Fills dims with the per-experiment defaults wherever left empty.
  void finalize();
  std::size_t task_d_in() const;
  std::size_t task_d_out() const;
};

ExperimentConfig load_config_file(const std::string& path,
                                  const std::map<std::string, std::string>& overrides);

/// Task source shared by training and evaluation; owns whatever data the
/// experiment needs (parsed station files, images).
class TaskSource {
 public:
  explicit TaskSource(const ExperimentConfig& cfg);
  Task sample(std::mt19937_64& rng) const;
  std::vector<Task> batch(std::size_t n, std::mt19937_64& rng) const;
  std::size_t corpus_size() const;

 private:
  ExperimentConfig cfg_;
  std::vector<StationYearFile> stations_;
  std::vector<Tensor> images_;
};

struct EvalReport {
  double mean_metric = 0.0;  // MSE or BCE per experiment
  double std_error = 0.0;
  std::vector<double> per_task;
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_clock_seconds = 0.0;  // not serialized; reports are byte-stable
};

/// Trains per config, writes metrics.csv and checkpoints under
/// output_dir, returns the final checkpoint path. Aborts on non-finite
/// loss with the last good checkpoint retained.
std::string run_train(const ExperimentConfig& cfg);

EvalReport run_eval(const std::string& checkpoint_path, const ExperimentConfig& cfg);
void write_report(const EvalReport& report, std::ostream& out);

/// JSON-lines: per task train points, the true curve on a dense grid, and
/// n_samples predicted curves.
void dump_predictions(const std::string& checkpoint_path, const ExperimentConfig& cfg,
                      std::size_t n_tasks, std::size_t n_samples, std::ostream& out);

}  // namespace stmaml

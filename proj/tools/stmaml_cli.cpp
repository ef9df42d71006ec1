// Command-line harness: training, evaluation, prediction dumps, GSOD
// ingestion, and synthetic task generation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "stmaml/experiment.hpp"

namespace fs = std::filesystem;
using namespace stmaml;

namespace {

struct CommonFlags {
  std::string config_file;
  std::map<std::string, std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_file, "JSON config file with flat dotted keys");
  cmd->add_option("--set", [&flags](const std::vector<std::string>& vals) {
        for (const auto& v : vals) {
          auto eq = v.find('=');
          if (eq == std::string::npos) return false;
          flags.overrides[v.substr(0, eq)] = v.substr(eq + 1);
        }
        return true;
      },
      "Override any config key, e.g. --set train.gamma1=0.01")
      ->type_name("KEY=VALUE")
      ->take_all();
}

int cmd_ingest_gsod(const std::string& gsod_dir, const std::string& out_dir, std::size_t n_train,
                    std::size_t n_val, std::size_t n_test, std::size_t shots, std::size_t queries,
                    std::uint64_t seed) {
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(gsod_dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());

  std::vector<StationYearFile> files;
  for (const auto& p : paths) {
    std::ifstream in(p);
    StationYearFile f = parse_gsod_csv(in, p.stem().string());
    if (f.eligible()) files.push_back(std::move(f));
  }
  std::cout << "eligible station-year files: " << files.size() << " of " << paths.size() << "\n";

  std::mt19937_64 rng(seed);
  std::shuffle(files.begin(), files.end(), rng);

  fs::create_directories(out_dir);
  std::size_t offset = 0;
  for (const auto& [name, want] :
       std::vector<std::pair<std::string, std::size_t>>{{"train", n_train}, {"val", n_val}, {"test", n_test}}) {
    const std::size_t n = std::min(want, files.size() - std::min(offset, files.size()));
    std::vector<Task> tasks;
    for (std::size_t i = 0; i < n; ++i)
      tasks.push_back(sample_weather_task(files[offset + i], shots, queries, rng));
    offset += n;
    std::ofstream out(out_dir + "/" + name + ".jsonl");
    dump_tasks_jsonl(tasks, out);
    std::cout << name << ": " << n << " episodes\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ST-MAML / MAML meta-learning harness"};
  app.require_subcommand(1);

  CommonFlags train_flags, eval_flags, dump_flags;

  auto* train_cmd = app.add_subcommand("train", "Meta-train a model and write checkpoints");
  add_common(train_cmd, train_flags);
  std::uint64_t train_seed = static_cast<std::uint64_t>(-1);
  std::string train_algorithm;
  train_cmd->add_option("--seed", train_seed, "Training seed");
  train_cmd->add_option("--algorithm", train_algorithm, "maml or stmaml")
      ->check(CLI::IsMember({"maml", "stmaml"}));

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on fresh tasks");
  add_common(eval_cmd, eval_flags);
  std::string eval_ckpt;
  std::size_t eval_tasks = 0, eval_samples = 0;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--tasks", eval_tasks, "Number of evaluation tasks");
  eval_cmd->add_option("--samples", eval_samples, "Solution samples per task");

  auto* dump_cmd = app.add_subcommand("dump-preds", "Dump predicted curves for plotting");
  add_common(dump_cmd, dump_flags);
  std::string dump_ckpt, dump_out = "preds.jsonl";
  std::size_t dump_tasks = 10, dump_samples = 10;
  dump_cmd->add_option("--checkpoint", dump_ckpt, "Checkpoint file")->required();
  dump_cmd->add_option("--tasks", dump_tasks, "Tasks to dump");
  dump_cmd->add_option("--samples", dump_samples, "Curves per task");
  dump_cmd->add_option("--out", dump_out, "Output JSON-lines file");

  auto* ingest_cmd = app.add_subcommand("ingest-gsod", "Preprocess NOAA GSOD CSVs into episodes");
  std::string gsod_dir, ingest_out;
  std::size_t n_train = 42000, n_val = 5000, n_test = 1000;
  std::size_t ingest_shots = 10, ingest_queries = 100;
  std::uint64_t ingest_seed = 0;
  ingest_cmd->add_option("--gsod-dir", gsod_dir, "Directory of station-year CSV files")->required();
  ingest_cmd->add_option("--out", ingest_out, "Output directory")->required();
  ingest_cmd->add_option("--train", n_train, "Train split file count");
  ingest_cmd->add_option("--val", n_val, "Validation split file count");
  ingest_cmd->add_option("--test", n_test, "Test split file count");
  ingest_cmd->add_option("--shots", ingest_shots, "Labeled days per episode");
  ingest_cmd->add_option("--queries", ingest_queries, "Query days per episode");
  ingest_cmd->add_option("--seed", ingest_seed, "Shuffle seed");

  auto* gen_cmd = app.add_subcommand("gen-tasks", "Dump synthetic 2D-regression tasks");
  std::string gen_out = "tasks.jsonl";
  std::size_t gen_n = 100, gen_shots = 10, gen_queries = 100;
  double gen_noise = 0.3;
  std::uint64_t gen_seed = 0;
  gen_cmd->add_option("--out", gen_out, "Output JSON-lines file");
  gen_cmd->add_option("--tasks", gen_n, "Number of tasks");
  gen_cmd->add_option("--shots", gen_shots, "Training points per task");
  gen_cmd->add_option("--queries", gen_queries, "Query points per task");
  gen_cmd->add_option("--noise", gen_noise, "Output noise std");
  gen_cmd->add_option("--seed", gen_seed, "Generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      if (train_seed != static_cast<std::uint64_t>(-1))
        train_flags.overrides["train.seed"] = std::to_string(train_seed);
      if (!train_algorithm.empty()) train_flags.overrides["algorithm"] = train_algorithm;
      ExperimentConfig cfg = load_config_file(train_flags.config_file, train_flags.overrides);
      std::string ckpt = run_train(cfg);
      std::cout << "checkpoint: " << ckpt << "\n";
    } else if (eval_cmd->parsed()) {
      if (eval_tasks) eval_flags.overrides["eval_tasks"] = std::to_string(eval_tasks);
      if (eval_samples) eval_flags.overrides["eval_samples"] = std::to_string(eval_samples);
      ExperimentConfig cfg = load_config_file(eval_flags.config_file, eval_flags.overrides);
      EvalReport report = run_eval(eval_ckpt, cfg);
      fs::create_directories(cfg.output_dir);
      std::ofstream out(cfg.output_dir + "/report.json");
      write_report(report, out);
      std::cout << "mean " << report.mean_metric << " +/- " << report.std_error << " over "
                << report.per_task.size() << " tasks (" << report.wall_clock_seconds << " s)\n"
                << "report: " << cfg.output_dir << "/report.json\n";
    } else if (dump_cmd->parsed()) {
      ExperimentConfig cfg = load_config_file(dump_flags.config_file, dump_flags.overrides);
      std::ofstream out(dump_out);
      dump_predictions(dump_ckpt, cfg, dump_tasks, dump_samples, out);
      std::cout << "predictions: " << dump_out << "\n";
    } else if (ingest_cmd->parsed()) {
      return cmd_ingest_gsod(gsod_dir, ingest_out, n_train, n_val, n_test, ingest_shots,
                             ingest_queries, ingest_seed);
    } else if (gen_cmd->parsed()) {
      EpisodeConfig ep;
      ep.shots = gen_shots;
      ep.queries = gen_queries;
      ep.noise_std = gen_noise;
      std::mt19937_64 rng(gen_seed);
      std::vector<Task> tasks = sample_episode_batch(ep, gen_n, rng);
      std::ofstream out(gen_out);
      dump_tasks_jsonl(tasks, out);
      std::cout << "tasks: " << gen_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

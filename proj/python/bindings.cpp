// Python surface: config-driven training and evaluation plus direct
// adapt-and-predict on numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "stmaml/checkpoint.hpp"
#include "stmaml/experiment.hpp"

namespace py = pybind11;
using namespace stmaml;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                         const char* name) {
  if (a.ndim() != 2) throw std::invalid_argument(std::string(name) + " must be a 2-D array");
  Shape shape{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))};
  std::vector<double> v(a.data(), a.data() + a.size());
  return Tensor::from(std::move(shape), std::move(v));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  if (t.shape().size() == 2) {
    py::array_t<double> a({t.shape()[0], t.shape()[1]});
    std::copy(t.values().begin(), t.values().end(), a.mutable_data());
    return a;
  }
  py::array_t<double> a(t.values().size());
  std::copy(t.values().begin(), t.values().end(), a.mutable_data());
  return a;
}

ExperimentConfig config_from_dict(const py::dict& d) {
  std::map<std::string, std::string> kv;
  for (auto item : d) kv[py::str(item.first)] = py::str(item.second);
  return ExperimentConfig::from_flat(kv);
}

py::dict dict_from_config(const ExperimentConfig& cfg) {
  py::dict d;
  for (const auto& [k, v] : cfg.to_flat()) d[py::str(k)] = v;
  return d;
}

Task task_from_arrays(const py::array_t<double>& x_tr, const py::array_t<double>& y_tr,
                      const py::array_t<double>& x_te, const py::array_t<double>& y_te,
                      const std::string& loss) {
  Task t;
  t.x_tr = tensor_from_array(x_tr, "x_tr");
  t.y_tr = tensor_from_array(y_tr, "y_tr");
  t.x_te = tensor_from_array(x_te, "x_te");
  t.y_te = tensor_from_array(y_te, "y_te");
  if (loss == "squared_error") t.loss_kind = LossKind::SquaredError;
  else if (loss == "bernoulli") t.loss_kind = LossKind::Bernoulli;
  else throw std::invalid_argument("loss must be squared_error or bernoulli");
  return t;
}

}  // namespace

PYBIND11_MODULE(_stmaml, m) {
  m.doc() = "Meta-learning engine: MAML and its stochastic-task extension";

  m.def("default_config",
        [](const std::string& experiment) {
          ExperimentConfig cfg;
          cfg.experiment = experiment;
          cfg.finalize();
          return dict_from_config(cfg);
        },
        py::arg("experiment") = "regression2d",
        "Flat key/value defaults for one experiment.");

  m.def("config_hash", [](const py::dict& d) { return config_from_dict(d).hash(); },
        py::arg("config"));

  m.def("train",
        [](const py::dict& d) {
          ExperimentConfig cfg = config_from_dict(d);
          py::gil_scoped_release release;
          return run_train(cfg);
        },
        py::arg("config"),
        "Meta-trains per config; returns the final checkpoint path.");

  m.def("evaluate",
        [](const std::string& checkpoint, const py::dict& d) {
          ExperimentConfig cfg = config_from_dict(d);
          EvalReport r;
          {
            py::gil_scoped_release release;
            r = run_eval(checkpoint, cfg);
          }
          py::dict out;
          out["mean_metric"] = r.mean_metric;
          out["std_error"] = r.std_error;
          out["per_task"] = r.per_task;
          out["config_hash"] = r.config_hash;
          out["seed"] = r.seed;
          return out;
        },
        py::arg("checkpoint"), py::arg("config"));

  m.def("sample_tasks",
        [](const py::dict& d, std::size_t n, std::uint64_t seed) {
          ExperimentConfig cfg = config_from_dict(d);
          TaskSource source(cfg);
          std::mt19937_64 rng(seed);
          py::list out;
          for (std::size_t i = 0; i < n; ++i) {
            Task t = source.sample(rng);
            py::dict j;
            j["x_tr"] = array_from_tensor(t.x_tr);
            j["y_tr"] = array_from_tensor(t.y_tr);
            j["x_te"] = array_from_tensor(t.x_te);
            j["y_te"] = array_from_tensor(t.y_te);
            j["family_id"] = t.family_id;
            j["loss"] = t.loss_kind == LossKind::SquaredError ? "squared_error" : "bernoulli";
            out.append(std::move(j));
          }
          return out;
        },
        py::arg("config"), py::arg("n"), py::arg("seed") = 0);

  m.def("adapt_predict",
        [](const std::string& checkpoint, const py::array_t<double>& x_tr,
           const py::array_t<double>& y_tr, const py::array_t<double>& x_te,
           const py::array_t<double>& y_te, const std::string& loss, std::size_t n_samples,
           std::size_t inner_steps, double gamma1, std::uint64_t seed) {
          Task t = task_from_arrays(x_tr, y_tr, x_te, y_te, loss);
          TrainingConfig cfg;
          cfg.inner_steps = inner_steps;
          cfg.gamma1 = gamma1;

          std::ifstream in(checkpoint);
          if (!in) throw std::runtime_error("cannot open checkpoint " + checkpoint);
          CheckpointHeader h = peek_header(in);
          in.clear();
          in.seekg(0);

          py::list samples;
          if (h.algorithm == "stmaml") {
            StMamlParams p = load_stmaml_checkpoint(in);
            std::mt19937_64 rng(seed);
            for (const auto& r : meta_test_adapt(p, t, n_samples, cfg, rng)) {
              py::dict s;
              s["predictions"] = array_from_tensor(r.predictions);
              s["train_loss"] = r.train_loss;
              s["test_metric"] = r.test_mse;
              samples.append(std::move(s));
            }
          } else {
            MamlParams p = load_maml_checkpoint(in);
            AdaptResult r = maml_test_adapt(p, t, cfg);
            py::dict s;
            s["predictions"] = array_from_tensor(r.predictions);
            s["train_loss"] = r.train_loss;
            s["test_metric"] = r.test_mse;
            samples.append(std::move(s));
          }
          return samples;
        },
        py::arg("checkpoint"), py::arg("x_tr"), py::arg("y_tr"), py::arg("x_te"),
        py::arg("y_te"), py::arg("loss") = "squared_error", py::arg("n_samples") = 10,
        py::arg("inner_steps") = 5, py::arg("gamma1") = 0.01, py::arg("seed") = 0,
        "Adapts a trained checkpoint to one task; returns per-sample predictions.");

  m.def("gradient_check",
        [](std::size_t dim, std::uint64_t seed) {
          std::mt19937_64 rng(seed);
          std::uniform_real_distribution<double> u(-1.0, 1.0);
          std::vector<double> v(dim);
          for (auto& x : v) x = u(rng);
          Tensor t = Tensor::from({dim}, std::move(v));
          return finite_difference_check(
              [](const Tensor& x) { return sum_all(sigmoid(square(x))); }, t);
        },
        py::arg("dim") = 8, py::arg("seed") = 0,
        "Max relative error of the autodiff engine on a smoke function.");
}

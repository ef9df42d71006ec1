#include "stmaml/checkpoint.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace stmaml {

namespace {
using nlohmann::json;

json weight_json(const Tensor& w) {
  const std::size_t in = w.shape()[0], out = w.shape()[1];
  json rows = json::array();
  for (std::size_t i = 0; i < in; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < out; ++j) row.push_back(w.values()[i * out + j]);
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Tensor& v) {
  json a = json::array();
  for (double x : v.values()) a.push_back(x);
  return a;
}

Tensor weight_from_json(const json& rows) {
  const std::size_t in = rows.size();
  const std::size_t out = in ? rows[0].size() : 0;
  std::vector<double> v;
  v.reserve(in * out);
  for (const auto& row : rows)
    for (const auto& x : row) v.push_back(x.get<double>());
  return Tensor::leaf({in, out}, std::move(v));
}

Tensor vector_from_json(const json& a) {
  std::vector<double> v;
  for (const auto& x : a) v.push_back(x.get<double>());
  const std::size_t d = v.size();
  return Tensor::leaf({d}, std::move(v));
}

json mlp_json(const Mlp& m) {
  json mod;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    json layer;
    layer["w"] = weight_json(m.weights[l]);
    layer["b"] = vector_json(m.biases[l]);
    mod[std::to_string(l)] = std::move(layer);
  }
  return mod;
}

Mlp mlp_from_json(const json& mod, Activation act) {
  Mlp m;
  m.act = act;
  for (std::size_t l = 0; mod.contains(std::to_string(l)); ++l) {
    const json& layer = mod.at(std::to_string(l));
    m.weights.push_back(weight_from_json(layer.at("w")));
    m.biases.push_back(vector_from_json(layer.at("b")));
  }
  return m;
}

json header_json(const CheckpointHeader& h) {
  json j;
  j["algorithm"] = h.algorithm;
  j["step"] = h.step;
  j["task_d_in"] = h.task_d_in;
  j["task_d_out"] = h.task_d_out;
  j["config_hash"] = h.config_hash;
  return j;
}

CheckpointHeader header_from_json(const json& j) {
  CheckpointHeader h;
  h.algorithm = j.value("algorithm", "stmaml");
  h.step = j.value("step", std::size_t{0});
  h.task_d_in = j.value("task_d_in", std::size_t{0});
  h.task_d_out = j.value("task_d_out", std::size_t{0});
  h.config_hash = j.value("config_hash", "");
  return h;
}
}  // namespace

void save_checkpoint(const StMamlParams& params, const CheckpointHeader& header,
                     std::ostream& out) {
  json j;
  j["header"] = header_json(header);
  j["header"]["d_z"] = params.dims.d_z;
  j["header"]["d_h"] = params.dims.d_h;
  j["header"]["dims"] = {{"learner", params.dims.learner},
                         {"encoder", params.dims.encoder},
                         {"head_hidden", params.dims.head_hidden}};
  json mods;
  mods["learner"] = mlp_json(params.learner);
  mods["encoder"] = mlp_json(params.encoder);
  mods["mu_head"] = mlp_json(params.mu_head);
  mods["sigma_head"] = mlp_json(params.sigma_head);
  json gate;
  gate["0"] = {{"w", weight_json(params.w1)}, {"b", vector_json(params.w0)}};
  mods["gate"] = std::move(gate);
  json input_map;
  input_map["0"] = {{"w", weight_json(params.beta1)}, {"b", vector_json(params.beta0)}};
  mods["input_map"] = std::move(input_map);
  j["params"] = std::move(mods);
  out << j.dump(2) << "\n";
}

void save_checkpoint(const MamlParams& params, const CheckpointHeader& header,
                     const std::vector<std::size_t>& learner_dims, std::ostream& out) {
  json j;
  j["header"] = header_json(header);
  j["header"]["dims"] = {{"learner", learner_dims}};
  j["params"]["learner"] = mlp_json(params.learner);
  out << j.dump(2) << "\n";
}

CheckpointHeader peek_header(std::istream& in) {
  json j = json::parse(in);
  return header_from_json(j.at("header"));
}

StMamlParams load_stmaml_checkpoint(std::istream& in, CheckpointHeader* header) {
  json j = json::parse(in);
  CheckpointHeader h = header_from_json(j.at("header"));
  if (h.algorithm != "stmaml")
    throw std::runtime_error("checkpoint: expected stmaml, found " + h.algorithm);
  if (header) *header = h;

  StMamlParams p;
  p.dims.d_z = j.at("header").at("d_z").get<std::size_t>();
  p.dims.d_h = j.at("header").at("d_h").get<std::size_t>();
  p.dims.learner = j.at("header").at("dims").at("learner").get<std::vector<std::size_t>>();
  p.dims.encoder = j.at("header").at("dims").at("encoder").get<std::vector<std::size_t>>();
  p.dims.head_hidden = j.at("header").at("dims").at("head_hidden").get<std::vector<std::size_t>>();

  const json& mods = j.at("params");
  p.learner = mlp_from_json(mods.at("learner"), Activation::Relu);
  p.encoder = mlp_from_json(mods.at("encoder"), Activation::Relu);
  p.mu_head = mlp_from_json(mods.at("mu_head"), Activation::Relu);
  p.sigma_head = mlp_from_json(mods.at("sigma_head"), Activation::Relu);
  p.w1 = weight_from_json(mods.at("gate").at("0").at("w"));
  p.w0 = vector_from_json(mods.at("gate").at("0").at("b"));
  p.beta1 = weight_from_json(mods.at("input_map").at("0").at("w"));
  p.beta0 = vector_from_json(mods.at("input_map").at("0").at("b"));
  return p;
}

MamlParams load_maml_checkpoint(std::istream& in, CheckpointHeader* header) {
  json j = json::parse(in);
  CheckpointHeader h = header_from_json(j.at("header"));
  if (h.algorithm != "maml")
    throw std::runtime_error("checkpoint: expected maml, found " + h.algorithm);
  if (header) *header = h;
  MamlParams p;
  p.learner = mlp_from_json(j.at("params").at("learner"), Activation::Relu);
  return p;
}

}  // namespace stmaml

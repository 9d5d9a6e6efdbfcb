#include "leopard/checkpoint.hpp"

#include <fstream>
#include <functional>
#include <limits>

#include "json.hpp"
#include "leopard/errors.hpp"

namespace leopard {

namespace {

using nlohmann::json;

// Infinities appear in untouched SPC minima; JSON has no literal for them.
json num(double x) {
  if (x == std::numeric_limits<double>::infinity()) return "inf";
  if (x == -std::numeric_limits<double>::infinity()) return "-inf";
  return x;
}

double as_num(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw ParseError("checkpoint: bad numeric literal '" + s + "'", 0, 0);
  }
  return j.get<double>();
}

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  m.data() = j.at("data").get<Vector>();
  return m;
}

json param_to_json(const Param& p) {
  return json{{"value", matrix_to_json(p.value)}, {"velocity", matrix_to_json(p.velocity)}};
}

Param param_from_json(const json& j) {
  Param p;
  p.value = matrix_from_json(j.at("value"));
  p.velocity = matrix_from_json(j.at("velocity"));
  return p;
}

json adapter_to_json(const StreamAdapter& a) {
  return json{{"weight", param_to_json(a.weight)},
              {"bias", param_to_json(a.bias)},
              {"dec_bias", param_to_json(a.dec_bias)}};
}

StreamAdapter adapter_from_json(const json& j) {
  StreamAdapter a;
  a.weight = param_from_json(j.at("weight"));
  a.bias = param_from_json(j.at("bias"));
  a.dec_bias = param_from_json(j.at("dec_bias"));
  return a;
}

json cluster_to_json(const Cluster& c) {
  return json{{"centroid", c.centroid},   {"cardinality", c.cardinality},
              {"dist_mean", c.dist_mean}, {"dist_std", c.dist_std},
              {"allegiance", c.allegiance}, {"dist_count", c.dist_count},
              {"dist_m2", c.dist_m2},     {"velocity", c.velocity}};
}

Cluster cluster_from_json(const json& j) {
  Cluster c(j.at("centroid").get<Vector>());
  c.cardinality = j.at("cardinality").get<std::size_t>();
  c.dist_mean = j.at("dist_mean").get<double>();
  c.dist_std = j.at("dist_std").get<double>();
  c.allegiance = j.at("allegiance").get<Vector>();
  c.dist_count = j.at("dist_count").get<std::size_t>();
  c.dist_m2 = j.at("dist_m2").get<double>();
  c.velocity = j.at("velocity").get<Vector>();
  return c;
}

json spc_to_json(const SpcStats& s) {
  return json{{"ema_mean", s.ema_mean},
              {"ema_sq", s.ema_sq},
              {"ema_initialized", s.ema_initialized},
              {"n", s.n},
              {"bias_mean", s.bias_mean},
              {"bias_m2", s.bias_m2},
              {"var_mean", s.var_mean},
              {"var_m2", s.var_m2},
              {"bias_mean_min", num(s.bias_mean_min)},
              {"bias_std_min", num(s.bias_std_min)},
              {"var_mean_min", num(s.var_mean_min)},
              {"var_std_min", num(s.var_std_min)}};
}

SpcStats spc_from_json(const json& j) {
  SpcStats s;
  s.ema_mean = j.at("ema_mean").get<Vector>();
  s.ema_sq = j.at("ema_sq").get<Vector>();
  s.ema_initialized = j.at("ema_initialized").get<bool>();
  s.n = j.at("n").get<std::size_t>();
  s.bias_mean = j.at("bias_mean").get<double>();
  s.bias_m2 = j.at("bias_m2").get<double>();
  s.var_mean = j.at("var_mean").get<double>();
  s.var_m2 = j.at("var_m2").get<double>();
  s.bias_mean_min = as_num(j.at("bias_mean_min"));
  s.bias_std_min = as_num(j.at("bias_std_min"));
  s.var_mean_min = as_num(j.at("var_mean_min"));
  s.var_std_min = as_num(j.at("var_std_min"));
  return s;
}

}  // namespace

std::string model_to_json(const LeopardModel& model) {
  json j;
  j["config"] = {{"source_dim", model.config.source_dim},
                 {"target_dim", model.config.target_dim},
                 {"adapter_dim", model.config.adapter_dim},
                 {"extractor_width1", model.config.extractor_width1},
                 {"extractor_width2", model.config.extractor_width2},
                 {"initial_layer_width", model.config.initial_layer_width},
                 {"dc_hidden_width", model.config.dc_hidden_width},
                 {"init_seed", model.config.init_seed}};
  j["learning_rate"] = model.learning_rate;
  j["momentum"] = model.momentum;
  j["lambda"] = model.lambda;
  j["prune_suppressed"] = model.prune_suppressed;

  j["extractor"] = {{"source_adapter", adapter_to_json(model.extractor.source_adapter)},
                    {"target_adapter", adapter_to_json(model.extractor.target_adapter)},
                    {"w1", param_to_json(model.extractor.w1)},
                    {"b1", param_to_json(model.extractor.b1)},
                    {"c1", param_to_json(model.extractor.c1)},
                    {"w2", param_to_json(model.extractor.w2)},
                    {"b2", param_to_json(model.extractor.b2)},
                    {"c2", param_to_json(model.extractor.c2)}};

  j["layers"] = json::array();
  for (const LayerState& l : model.layers) {
    json clusters = json::array();
    for (const Cluster& c : l.clusters) clusters.push_back(cluster_to_json(c));
    j["layers"].push_back({{"weight", param_to_json(l.weight)},
                           {"bias", param_to_json(l.bias)},
                           {"dec_bias", param_to_json(l.dec_bias)},
                           {"clusters", clusters},
                           {"spc", spc_to_json(l.spc)},
                           {"contrib_mean", l.contrib_mean},
                           {"contrib_n", l.contrib_n}});
  }

  j["domain_classifier"] = {{"hidden_w", param_to_json(model.domain_classifier.hidden_w)},
                            {"hidden_b", param_to_json(model.domain_classifier.hidden_b)},
                            {"out_w", param_to_json(model.domain_classifier.out_w)},
                            {"out_b", param_to_json(model.domain_classifier.out_b)}};
  return j.dump();
}

LeopardModel model_from_json(const std::string& text) {
  const json j = json::parse(text);
  LeopardModel m;
  const json& c = j.at("config");
  m.config.source_dim = c.at("source_dim").get<std::size_t>();
  m.config.target_dim = c.at("target_dim").get<std::size_t>();
  m.config.adapter_dim = c.at("adapter_dim").get<std::size_t>();
  m.config.extractor_width1 = c.at("extractor_width1").get<std::size_t>();
  m.config.extractor_width2 = c.at("extractor_width2").get<std::size_t>();
  m.config.initial_layer_width = c.at("initial_layer_width").get<std::size_t>();
  m.config.dc_hidden_width = c.at("dc_hidden_width").get<std::size_t>();
  m.config.init_seed = c.at("init_seed").get<std::uint64_t>();
  m.learning_rate = j.at("learning_rate").get<double>();
  m.momentum = j.at("momentum").get<double>();
  m.lambda = j.at("lambda").get<double>();
  m.prune_suppressed = j.at("prune_suppressed").get<std::size_t>();

  const json& e = j.at("extractor");
  m.extractor.source_adapter = adapter_from_json(e.at("source_adapter"));
  m.extractor.target_adapter = adapter_from_json(e.at("target_adapter"));
  m.extractor.w1 = param_from_json(e.at("w1"));
  m.extractor.b1 = param_from_json(e.at("b1"));
  m.extractor.c1 = param_from_json(e.at("c1"));
  m.extractor.w2 = param_from_json(e.at("w2"));
  m.extractor.b2 = param_from_json(e.at("b2"));
  m.extractor.c2 = param_from_json(e.at("c2"));

  m.layers.clear();
  for (const json& lj : j.at("layers")) {
    LayerState l;
    l.weight = param_from_json(lj.at("weight"));
    l.bias = param_from_json(lj.at("bias"));
    l.dec_bias = param_from_json(lj.at("dec_bias"));
    for (const json& cj : lj.at("clusters")) l.clusters.push_back(cluster_from_json(cj));
    l.spc = spc_from_json(lj.at("spc"));
    l.contrib_mean = lj.at("contrib_mean").get<Vector>();
    l.contrib_n = lj.at("contrib_n").get<std::vector<std::size_t>>();
    m.layers.push_back(std::move(l));
  }

  const json& d = j.at("domain_classifier");
  m.domain_classifier.hidden_w = param_from_json(d.at("hidden_w"));
  m.domain_classifier.hidden_b = param_from_json(d.at("hidden_b"));
  m.domain_classifier.out_w = param_from_json(d.at("out_w"));
  m.domain_classifier.out_b = param_from_json(d.at("out_b"));
  return m;
}

void save_model(const LeopardModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_model: cannot open " + path);
  out << model_to_json(model);
}

LeopardModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_model: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return model_from_json(text);
}

std::size_t state_signature(const LeopardModel& model) {
  return std::hash<std::string>{}(model_to_json(model));
}

}  // namespace leopard

#include "leopard/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "leopard/errors.hpp"

namespace leopard {

double relu(double x) { return x > 0.0 ? x : 0.0; }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace {

constexpr double kLogitClamp = 30.0;

Matrix relu_batch(const Matrix& m) {
  Matrix out = m;
  for (double& x : out.data()) x = relu(x);
  return out;
}

Matrix sigmoid_batch(const Matrix& m) {
  Matrix out = m;
  for (double& x : out.data()) x = sigmoid(x);
  return out;
}

// X W^T + b, the dense layer applied to each row of X.
Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix out(x.rows(), w.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t r = 0; r < w.rows(); ++r) {
      double s = b(0, r);
      for (std::size_t c = 0; c < w.cols(); ++c) s += x(i, c) * w(r, c);
      out(i, r) = s;
    }
  }
  return out;
}

// X W + c, the tied (transposed) layer applied to each row of X.
Matrix affine_transpose(const Matrix& x, const Matrix& w, const Matrix& c) {
  Matrix out(x.rows(), w.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) out(i, j) = c(0, j);
    for (std::size_t r = 0; r < w.rows(); ++r) {
      const double xi = x(i, r);
      for (std::size_t j = 0; j < w.cols(); ++j) out(i, j) += xi * w(r, j);
    }
  }
  return out;
}

// A^T B: (n x p)^T (n x q) -> p x q. Accumulates the usual weight gradients.
Matrix at_b(const Matrix& a, const Matrix& b) {
  Matrix out(a.cols(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double v = a(i, p);
      if (v == 0.0) continue;
      for (std::size_t q = 0; q < b.cols(); ++q) out(p, q) += v * b(i, q);
    }
  }
  return out;
}

// A B: (n x p) (p x q) -> n x q.
Matrix a_b(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double v = a(i, p);
      if (v == 0.0) continue;
      for (std::size_t q = 0; q < b.cols(); ++q) out(i, q) += v * b(p, q);
    }
  }
  return out;
}

// A B^T: (n x p) (q x p) -> n x q.
Matrix a_bt(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t q = 0; q < b.rows(); ++q) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(q, p);
      out(i, q) = s;
    }
  }
  return out;
}

Matrix colsum(const Matrix& m) {
  Matrix out(1, m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += m(i, j);
  return out;
}

Matrix mask_mul(const Matrix& grad, const Matrix& pre) {
  Matrix out = grad;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (pre.data()[i] <= 0.0) out.data()[i] = 0.0;
  }
  return out;
}

Matrix sigmoid_grad(const Matrix& grad, const Matrix& post) {
  Matrix out = grad;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double p = post.data()[i];
    out.data()[i] *= p * (1.0 - p);
  }
  return out;
}

Vector xavier_vector(std::size_t count, std::size_t fan_in, std::size_t fan_out,
                     std::uint64_t seed) {
  const double bound = xavier_bound(fan_in, fan_out);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Vector v(count);
  for (double& x : v) x = dist(rng);
  return v;
}

Param bias_param(std::size_t n) { return Param(Matrix(1, n, 0.0)); }

}  // namespace

void LayerState::note_activation(const Vector& h) {
  for (std::size_t j = 0; j < h.size(); ++j) {
    ++contrib_n[j];
    contrib_mean[j] += (std::abs(h[j]) - contrib_mean[j]) / static_cast<double>(contrib_n[j]);
  }
}

LeopardModel build_model(const ModelConfig& config) {
  LeopardModel m;
  m.config = config;
  std::uint64_t seed = config.init_seed;
  auto next = [&seed]() { return seed++ * 0x9e3779b97f4a7c15ULL + 12345ULL; };

  auto make_adapter = [&](std::size_t raw_dim) {
    StreamAdapter a;
    a.weight = Param(xavier_init(raw_dim, config.adapter_dim, next()));
    a.bias = bias_param(config.adapter_dim);
    a.dec_bias = bias_param(raw_dim);
    return a;
  };
  m.extractor.source_adapter = make_adapter(config.source_dim);
  m.extractor.target_adapter = make_adapter(config.target_dim);
  m.extractor.w1 = Param(xavier_init(config.adapter_dim, config.extractor_width1, next()));
  m.extractor.b1 = bias_param(config.extractor_width1);
  m.extractor.c1 = bias_param(config.adapter_dim);
  m.extractor.w2 = Param(xavier_init(config.extractor_width1, config.extractor_width2, next()));
  m.extractor.b2 = bias_param(config.extractor_width2);
  m.extractor.c2 = bias_param(config.extractor_width1);

  LayerState layer;
  layer.weight = Param(xavier_init(config.extractor_width2, config.initial_layer_width, next()));
  layer.bias = bias_param(config.initial_layer_width);
  layer.dec_bias = bias_param(config.extractor_width2);
  layer.contrib_mean.assign(config.initial_layer_width, 0.0);
  layer.contrib_n.assign(config.initial_layer_width, 0);
  m.layers.push_back(std::move(layer));

  m.domain_classifier.hidden_w =
      Param(xavier_init(config.extractor_width2, config.dc_hidden_width, next()));
  m.domain_classifier.hidden_b = bias_param(config.dc_hidden_width);
  m.domain_classifier.out_w = Param(xavier_init(config.dc_hidden_width, 1, next()));
  m.domain_classifier.out_b = bias_param(1);
  return m;
}

Vector extract_features(const LeopardModel& model, const Vector& x, Domain domain) {
  const StreamAdapter& ad = model.extractor.adapter(domain);
  if (x.size() != ad.weight.value.cols())
    throw std::invalid_argument("extract_features: input dimension mismatch");
  Vector a = matvec(ad.weight.value, x);
  for (std::size_t j = 0; j < a.size(); ++j) a[j] += ad.bias.value(0, j);
  Vector e1 = matvec(model.extractor.w1.value, a);
  for (std::size_t j = 0; j < e1.size(); ++j) e1[j] = relu(e1[j] + model.extractor.b1.value(0, j));
  Vector z = matvec(model.extractor.w2.value, e1);
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = relu(z[j] + model.extractor.b2.value(0, j));
  return z;
}

std::vector<Vector> encode(const LeopardModel& model, const Vector& z, std::size_t depth) {
  if (depth > model.depth()) throw std::invalid_argument("encode: depth exceeds model depth");
  std::vector<Vector> latents;
  Vector h = z;
  for (std::size_t l = 0; l < depth; ++l) {
    const LayerState& layer = model.layers[l];
    if (h.size() != layer.input_dim()) throw std::invalid_argument("encode: dimension mismatch");
    Vector next = matvec(layer.weight.value, h);
    for (std::size_t j = 0; j < next.size(); ++j)
      next[j] = relu(next[j] + layer.bias.value(0, j));
    latents.push_back(next);
    h = std::move(next);
  }
  return latents;
}

Vector decode(const LeopardModel& model, const Vector& h, std::size_t layer, Activation act) {
  const LayerState& l = model.layers.at(layer);
  if (h.size() != l.width()) throw std::invalid_argument("decode: dimension mismatch");
  Vector rec = matvec_transpose(l.weight.value, h);
  for (std::size_t j = 0; j < rec.size(); ++j) {
    rec[j] += l.dec_bias.value(0, j);
    rec[j] = act == Activation::Rectifier ? relu(rec[j]) : sigmoid(rec[j]);
  }
  return rec;
}

double domain_forward(const LeopardModel& model, const Vector& z) {
  const DomainClassifier& dc = model.domain_classifier;
  if (z.size() != dc.hidden_w.value.cols())
    throw std::invalid_argument("domain_forward: dimension mismatch");
  Vector q = matvec(dc.hidden_w.value, z);
  for (std::size_t j = 0; j < q.size(); ++j) q[j] = relu(q[j] + dc.hidden_b.value(0, j));
  double logit = dc.out_b.value(0, 0);
  for (std::size_t j = 0; j < q.size(); ++j) logit += dc.out_w.value(0, j) * q[j];
  logit = std::clamp(logit, -kLogitClamp, kLogitClamp);
  return sigmoid(logit);
}

Matrix reverse_gradient(const Matrix& grad, double alpha1) {
  Matrix out = grad;
  for (double& x : out.data()) x = -alpha1 * x;
  return out;
}

PredictionTrace predict(const LeopardModel& model, const Vector& x, Domain domain) {
  const Vector z = extract_features(model, x, domain);
  const std::vector<Vector> latents = encode(model, z, model.depth());
  PredictionTrace trace;
  for (std::size_t l = 0; l < model.depth(); ++l) {
    const LayerState& layer = model.layers[l];
    if (layer.clusters.empty()) {
      ++trace.skipped_layers;
      continue;
    }
    const Vector phi = similarity(latents[l], layer.clusters, model.lambda);
    const Cluster& win = layer.clusters[winner_index(phi)];
    if (win.allegiance.empty()) {
      ++trace.skipped_layers;
      continue;
    }
    trace.local_scores.push_back(win.allegiance);
    if (trace.global_score.empty()) trace.global_score.assign(win.allegiance.size(), 0.0);
    axpy(trace.global_score, win.allegiance, 1.0);
  }
  trace.predicted = 0;
  for (std::size_t o = 1; o < trace.global_score.size(); ++o) {
    if (trace.global_score[o] > trace.global_score[trace.predicted])
      trace.predicted = static_cast<int>(o);
  }
  return trace;
}

ExtractorCache extractor_forward(const LeopardModel& model, const Matrix& x, Domain domain) {
  const StreamAdapter& ad = model.extractor.adapter(domain);
  if (x.cols() != ad.weight.value.cols())
    throw std::invalid_argument("extractor_forward: input dimension mismatch");
  ExtractorCache c;
  c.domain = domain;
  c.x = x;
  c.a = affine(x, ad.weight.value, ad.bias.value);
  c.e1_pre = affine(c.a, model.extractor.w1.value, model.extractor.b1.value);
  c.e1 = relu_batch(c.e1_pre);
  c.z_pre = affine(c.e1, model.extractor.w2.value, model.extractor.b2.value);
  c.z = relu_batch(c.z_pre);
  return c;
}

SaeCache sae_encode(const LeopardModel& model, const Matrix& z, std::size_t depth) {
  SaeCache c;
  const Matrix* h = &z;
  for (std::size_t l = 0; l < depth; ++l) {
    c.pre.push_back(affine(*h, model.layers[l].weight.value, model.layers[l].bias.value));
    c.post.push_back(relu_batch(c.pre.back()));
    h = &c.post.back();
  }
  return c;
}

EndToEndCache end_to_end_decode(const LeopardModel& model, const ExtractorCache& ex,
                                const SaeCache& sae) {
  const std::size_t depth = sae.post.size();
  EndToEndCache c;
  c.dec_pre.resize(depth);
  c.dec_post.resize(depth);
  const Matrix* g = &sae.post.back();
  for (std::size_t l = depth; l-- > 0;) {
    c.dec_pre[l] = affine_transpose(*g, model.layers[l].weight.value,
                                    model.layers[l].dec_bias.value);
    c.dec_post[l] = relu_batch(c.dec_pre[l]);
    g = &c.dec_post[l];
  }
  const Matrix& zdec = c.dec_post[0];
  c.d1_pre = affine_transpose(zdec, model.extractor.w2.value, model.extractor.c2.value);
  c.d1 = relu_batch(c.d1_pre);
  c.d0_pre = affine_transpose(c.d1, model.extractor.w1.value, model.extractor.c1.value);
  c.d0 = relu_batch(c.d0_pre);
  const StreamAdapter& ad = model.extractor.adapter(ex.domain);
  c.xhat_pre = affine_transpose(c.d0, ad.weight.value, ad.dec_bias.value);
  c.xhat = sigmoid_batch(c.xhat_pre);
  return c;
}

DomainClassifierCache domain_forward_batch(const LeopardModel& model, const Matrix& z) {
  const DomainClassifier& dc = model.domain_classifier;
  DomainClassifierCache c;
  c.q_pre = affine(z, dc.hidden_w.value, dc.hidden_b.value);
  c.q = relu_batch(c.q_pre);
  c.logit = affine(c.q, dc.out_w.value, dc.out_b.value);
  for (double& x : c.logit.data()) x = std::clamp(x, -kLogitClamp, kLogitClamp);
  c.p = sigmoid_batch(c.logit);
  return c;
}

void accumulate_grad(GradMap& grads, const std::string& name, const Matrix& g) {
  auto [it, inserted] = grads.emplace(name, g);
  if (!inserted) {
    if (!it->second.same_shape(g)) throw std::invalid_argument("accumulate_grad: shape mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) it->second.data()[i] += g.data()[i];
  }
}

namespace {

std::string adapter_prefix(Domain d) {
  return d == Domain::Source ? "adapter.source." : "adapter.target.";
}

}  // namespace

void extractor_backward(const LeopardModel& model, const ExtractorCache& ex,
                        const Matrix& dz, GradMap& grads) {
  const Matrix dz_pre = mask_mul(dz, ex.z_pre);
  accumulate_grad(grads, "extractor.2.w", at_b(dz_pre, ex.e1));
  accumulate_grad(grads, "extractor.2.b", colsum(dz_pre));
  const Matrix de1 = a_b(dz_pre, model.extractor.w2.value);
  const Matrix de1_pre = mask_mul(de1, ex.e1_pre);
  accumulate_grad(grads, "extractor.1.w", at_b(de1_pre, ex.a));
  accumulate_grad(grads, "extractor.1.b", colsum(de1_pre));
  const Matrix da = a_b(de1_pre, model.extractor.w1.value);
  const std::string prefix = adapter_prefix(ex.domain);
  accumulate_grad(grads, prefix + "w", at_b(da, ex.x));
  accumulate_grad(grads, prefix + "b", colsum(da));
}

void end_to_end_backward(const LeopardModel& model, const ExtractorCache& ex,
                         const SaeCache& sae, const EndToEndCache& e2e,
                         const Matrix& dxhat, GradMap& grads) {
  const std::size_t depth = sae.post.size();
  const StreamAdapter& ad = model.extractor.adapter(ex.domain);
  const std::string prefix = adapter_prefix(ex.domain);

  const Matrix dxhat_pre = sigmoid_grad(dxhat, e2e.xhat);
  accumulate_grad(grads, prefix + "c", colsum(dxhat_pre));
  accumulate_grad(grads, prefix + "w", at_b(e2e.d0, dxhat_pre));
  const Matrix dd0 = a_bt(dxhat_pre, ad.weight.value);

  const Matrix dd0_pre = mask_mul(dd0, e2e.d0_pre);
  accumulate_grad(grads, "extractor.1.c", colsum(dd0_pre));
  accumulate_grad(grads, "extractor.1.w", at_b(e2e.d1, dd0_pre));
  const Matrix dd1 = a_bt(dd0_pre, model.extractor.w1.value);

  const Matrix dd1_pre = mask_mul(dd1, e2e.d1_pre);
  accumulate_grad(grads, "extractor.2.c", colsum(dd1_pre));
  accumulate_grad(grads, "extractor.2.w", at_b(e2e.dec_post[0], dd1_pre));
  Matrix dg = a_bt(dd1_pre, model.extractor.w2.value);  // gradient at dec_post[0]

  for (std::size_t l = 0; l < depth; ++l) {
    const Matrix ds = mask_mul(dg, e2e.dec_pre[l]);
    const std::string key = "sae." + std::to_string(l) + ".";
    const Matrix& upstream = (l + 1 < depth) ? e2e.dec_post[l + 1] : sae.post.back();
    accumulate_grad(grads, key + "c", colsum(ds));
    accumulate_grad(grads, key + "w", at_b(upstream, ds));
    dg = a_b(ds, model.layers[l].weight.value);  // gradient at dec_post[l+1] / h^depth
  }

  // dg now sits on h^depth; walk back down the encoder.
  Matrix dh = dg;
  for (std::size_t l = depth; l-- > 0;) {
    const Matrix dpre = mask_mul(dh, sae.pre[l]);
    const std::string key = "sae." + std::to_string(l) + ".";
    const Matrix& input = l > 0 ? sae.post[l - 1] : ex.z;
    accumulate_grad(grads, key + "w", at_b(dpre, input));
    accumulate_grad(grads, key + "b", colsum(dpre));
    dh = a_b(dpre, model.layers[l].weight.value);
  }
  extractor_backward(model, ex, dh, grads);
}

LayerReconCache layer_recon_forward(const LeopardModel& model, std::size_t layer,
                                    const Matrix& h_prev) {
  const LayerState& l = model.layers.at(layer);
  LayerReconCache c;
  c.h_prev = h_prev;
  c.pre = affine(h_prev, l.weight.value, l.bias.value);
  c.h = relu_batch(c.pre);
  c.rec_pre = affine_transpose(c.h, l.weight.value, l.dec_bias.value);
  c.rec = relu_batch(c.rec_pre);
  return c;
}

void layer_recon_backward(const LeopardModel& model, std::size_t layer,
                          const LayerReconCache& cache, const Matrix& drec,
                          const Matrix& dh_extra, GradMap& grads) {
  const LayerState& l = model.layers.at(layer);
  const std::string key = "sae." + std::to_string(layer) + ".";
  const Matrix ds = mask_mul(drec, cache.rec_pre);
  accumulate_grad(grads, key + "c", colsum(ds));
  accumulate_grad(grads, key + "w", at_b(cache.h, ds));
  Matrix dh = a_b(ds, l.weight.value);
  if (!dh_extra.empty()) {
    for (std::size_t i = 0; i < dh.size(); ++i) dh.data()[i] += dh_extra.data()[i];
  }
  const Matrix dpre = mask_mul(dh, cache.pre);
  accumulate_grad(grads, key + "w", at_b(dpre, cache.h_prev));
  accumulate_grad(grads, key + "b", colsum(dpre));
}

void domain_backward(const LeopardModel& model, const Matrix& z,
                     const DomainClassifierCache& cache, const Matrix& dlogit,
                     GradMap& grads, Matrix* dz) {
  accumulate_grad(grads, "dc.out.w", at_b(dlogit, cache.q));
  accumulate_grad(grads, "dc.out.b", colsum(dlogit));
  const Matrix dq = a_b(dlogit, model.domain_classifier.out_w.value);
  const Matrix dq_pre = mask_mul(dq, cache.q_pre);
  accumulate_grad(grads, "dc.hidden.w", at_b(dq_pre, z));
  accumulate_grad(grads, "dc.hidden.b", colsum(dq_pre));
  if (dz) *dz = a_b(dq_pre, model.domain_classifier.hidden_w.value);
}

// ---- parameter registry ----

namespace {

struct ParamEntry {
  std::string name;
  Param* param;
};

std::vector<ParamEntry> enumerate(LeopardModel& m) {
  std::vector<ParamEntry> out;
  auto add = [&out](const std::string& name, Param& p) { out.push_back({name, &p}); };
  add("adapter.source.w", m.extractor.source_adapter.weight);
  add("adapter.source.b", m.extractor.source_adapter.bias);
  add("adapter.source.c", m.extractor.source_adapter.dec_bias);
  add("adapter.target.w", m.extractor.target_adapter.weight);
  add("adapter.target.b", m.extractor.target_adapter.bias);
  add("adapter.target.c", m.extractor.target_adapter.dec_bias);
  add("extractor.1.w", m.extractor.w1);
  add("extractor.1.b", m.extractor.b1);
  add("extractor.1.c", m.extractor.c1);
  add("extractor.2.w", m.extractor.w2);
  add("extractor.2.b", m.extractor.b2);
  add("extractor.2.c", m.extractor.c2);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const std::string key = "sae." + std::to_string(l) + ".";
    add(key + "w", m.layers[l].weight);
    add(key + "b", m.layers[l].bias);
    add(key + "c", m.layers[l].dec_bias);
  }
  add("dc.hidden.w", m.domain_classifier.hidden_w);
  add("dc.hidden.b", m.domain_classifier.hidden_b);
  add("dc.out.w", m.domain_classifier.out_w);
  add("dc.out.b", m.domain_classifier.out_b);
  return out;
}

bool is_centroid_key(const std::string& name) {
  return name.rfind("sae.", 0) == 0 && name.size() > 10 &&
         name.compare(name.size() - 10, 10, ".centroids") == 0;
}

std::size_t centroid_layer(const std::string& name) {
  return static_cast<std::size_t>(std::stoul(name.substr(4)));
}

}  // namespace

ParamGroup param_group(const std::string& name) {
  if (name.rfind("dc.", 0) == 0) return ParamGroup::DomainClassifier;
  if (name.rfind("sae.", 0) == 0) return ParamGroup::Classifier;
  return ParamGroup::Extractor;
}

std::vector<std::string> param_names(const LeopardModel& model,
                                     std::optional<ParamGroup> group) {
  std::vector<std::string> names;
  auto& m = const_cast<LeopardModel&>(model);
  for (const ParamEntry& e : enumerate(m)) names.push_back(e.name);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (!model.layers[l].clusters.empty())
      names.push_back("sae." + std::to_string(l) + ".centroids");
  }
  if (group) {
    std::erase_if(names, [&](const std::string& n) { return param_group(n) != *group; });
  }
  return names;
}

Matrix get_param_value(const LeopardModel& model, const std::string& name) {
  if (is_centroid_key(name)) {
    const LayerState& layer = model.layers.at(centroid_layer(name));
    Matrix out;
    for (const Cluster& c : layer.clusters) out.append_row(c.centroid);
    return out;
  }
  auto& m = const_cast<LeopardModel&>(model);
  for (const ParamEntry& e : enumerate(m)) {
    if (e.name == name) return e.param->value;
  }
  throw std::invalid_argument("get_param_value: unknown parameter " + name);
}

void set_param_value(LeopardModel& model, const std::string& name, const Matrix& value) {
  if (is_centroid_key(name)) {
    LayerState& layer = model.layers.at(centroid_layer(name));
    if (value.rows() != layer.clusters.size())
      throw std::invalid_argument("set_param_value: centroid count mismatch");
    for (std::size_t j = 0; j < value.rows(); ++j) layer.clusters[j].centroid = value.row(j);
    return;
  }
  for (const ParamEntry& e : enumerate(model)) {
    if (e.name == name) {
      if (!e.param->value.same_shape(value))
        throw std::invalid_argument("set_param_value: shape mismatch for " + name);
      e.param->value = value;
      return;
    }
  }
  throw std::invalid_argument("set_param_value: unknown parameter " + name);
}

void apply_updates(LeopardModel& model, const GradMap& grads, ParamGroup group) {
  for (const auto& [name, grad] : grads) {
    if (param_group(name) != group) continue;
    if (!grad.all_finite())
      throw NumericError("apply_updates: non-finite gradient for " + name);
  }
  for (const auto& [name, grad] : grads) {
    if (param_group(name) != group) continue;
    if (is_centroid_key(name)) {
      LayerState& layer = model.layers.at(centroid_layer(name));
      if (grad.rows() != layer.clusters.size())
        throw std::invalid_argument("apply_updates: centroid count mismatch");
      for (std::size_t j = 0; j < grad.rows(); ++j) {
        Cluster& c = layer.clusters[j];
        for (std::size_t d = 0; d < c.centroid.size(); ++d) {
          c.velocity[d] = model.momentum * c.velocity[d] + grad(j, d);
          c.centroid[d] -= model.learning_rate * c.velocity[d];
        }
      }
      continue;
    }
    for (const ParamEntry& e : enumerate(model)) {
      if (e.name == name) {
        sgd_momentum_step(*e.param, grad, model.learning_rate, model.momentum);
        break;
      }
    }
  }
}

// ---- structural mutation ----

void grow_node(LeopardModel& model, std::size_t layer, const Matrix& batch_h_prev,
               std::uint64_t rng_seed) {
  LayerState& l = model.layers.at(layer);
  const std::size_t u = l.input_dim();
  const std::size_t new_width = l.width() + 1;

  const Vector row = xavier_vector(u, u, new_width, rng_seed);
  l.weight.value.append_row(row);
  l.weight.velocity.append_row(Vector(u, 0.0));
  l.bias.value.append_col({0.0});
  l.bias.velocity.append_col({0.0});

  // New node's mean rectified activation over the current batch seeds the
  // extra centroid coordinate.
  double mean_act = 0.0;
  if (batch_h_prev.rows() > 0) {
    if (batch_h_prev.cols() != u)
      throw std::invalid_argument("grow_node: batch dimension mismatch");
    for (std::size_t i = 0; i < batch_h_prev.rows(); ++i)
      mean_act += relu(dot(row, batch_h_prev.row(i)));
    mean_act /= static_cast<double>(batch_h_prev.rows());
  }
  for (Cluster& c : l.clusters) {
    c.centroid.push_back(mean_act);
    c.velocity.push_back(0.0);
  }
  l.contrib_mean.push_back(0.0);
  l.contrib_n.push_back(0);

  if (layer + 1 < model.layers.size()) {
    LayerState& up = model.layers[layer + 1];
    const Vector col =
        xavier_vector(up.width(), up.input_dim() + 1, up.width(), rng_seed + 1);
    up.weight.value.append_col(col);
    up.weight.velocity.append_col(Vector(up.width(), 0.0));
    up.dec_bias.value.append_col({0.0});
    up.dec_bias.velocity.append_col({0.0});
    up.spc.reset();  // its input dimensionality changed
  }

  if (l.spc.n > 0) {
    l.spc.bias_mean_min = l.spc.bias_mean;
    l.spc.bias_std_min = l.spc.bias_std();
    l.spc.var_mean_min = l.spc.var_mean;
    l.spc.var_std_min = l.spc.var_std();
  }
}

bool prune_node(LeopardModel& model, std::size_t layer, std::size_t node) {
  LayerState& l = model.layers.at(layer);
  if (l.width() <= 2) {
    ++model.prune_suppressed;
    return false;
  }
  if (node >= l.width()) throw std::invalid_argument("prune_node: node index out of range");

  l.weight.value.remove_row(node);
  l.weight.velocity.remove_row(node);
  l.bias.value.remove_col(node);
  l.bias.velocity.remove_col(node);
  for (Cluster& c : l.clusters) {
    c.centroid.erase(c.centroid.begin() + static_cast<std::ptrdiff_t>(node));
    c.velocity.erase(c.velocity.begin() + static_cast<std::ptrdiff_t>(node));
  }
  l.contrib_mean.erase(l.contrib_mean.begin() + static_cast<std::ptrdiff_t>(node));
  l.contrib_n.erase(l.contrib_n.begin() + static_cast<std::ptrdiff_t>(node));

  if (layer + 1 < model.layers.size()) {
    LayerState& up = model.layers[layer + 1];
    up.weight.value.remove_col(node);
    up.weight.velocity.remove_col(node);
    up.dec_bias.value.remove_col(node);
    up.dec_bias.velocity.remove_col(node);
    up.spc.reset();
  }

  if (l.spc.n > 0) {
    l.spc.var_mean_min = l.spc.var_mean;
    l.spc.var_std_min = l.spc.var_std();
  }
  return true;
}

void add_layer(LeopardModel& model, std::uint64_t rng_seed) {
  const LayerState& last = model.layers.back();
  const std::size_t input_dim = last.width();
  const std::size_t width = std::max<std::size_t>(2, input_dim / 2);
  LayerState layer;
  layer.weight = Param(xavier_init(input_dim, width, rng_seed));
  layer.bias = Param(Matrix(1, width, 0.0));
  layer.dec_bias = Param(Matrix(1, input_dim, 0.0));
  layer.contrib_mean.assign(width, 0.0);
  layer.contrib_n.assign(width, 0);
  model.layers.push_back(std::move(layer));
}

}  // namespace leopard

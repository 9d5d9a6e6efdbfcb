#include "leopard/learner.hpp"

#include <cmath>
#include <stdexcept>

#include "leopard/errors.hpp"

namespace leopard {

namespace {

double mse(const Matrix& target, const Matrix& output) {
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = output.data()[i] - target.data()[i];
    s += d * d;
  }
  return s;
}

void ensure_finite(double loss, const GradMap& grads) {
  if (!std::isfinite(loss)) throw NumericError("loss is non-finite");
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) throw NumericError("non-finite gradient for " + name);
  }
}

}  // namespace

void LearnerConfig::validate() const {
  if (alpha1 < 0.0 || alpha2 < 0.0) throw std::invalid_argument("LearnerConfig: negative trade-off");
  if (lambda <= 0.0) throw std::invalid_argument("LearnerConfig: lambda must be > 0");
  if (learning_rate <= 0.0) throw std::invalid_argument("LearnerConfig: learning_rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("LearnerConfig: momentum must be in [0,1)");
  if (epochs_per_batch < 1) throw std::invalid_argument("LearnerConfig: epochs_per_batch >= 1");
}

Learner::Learner(const ModelConfig& model_config, LearnerConfig config,
                 AblationSwitches switches, StreamBatch prerecorded)
    : model_(build_model(model_config)),
      config_(config),
      switches_(switches),
      prerecorded_(std::move(prerecorded)),
      seed_counter_(model_config.init_seed * 7919ULL + 17ULL) {
  config_.validate();
  model_.learning_rate = config_.learning_rate;
  model_.momentum = config_.momentum;
  model_.lambda = config_.lambda;
}

Matrix Learner::labelled_prerecorded_features(std::vector<int>* labels) const {
  Matrix feats;
  if (!prerecorded_.labels) return feats;
  for (std::size_t i = 0; i < prerecorded_.size(); ++i) {
    const int l = (*prerecorded_.labels)[i];
    if (l < 0) continue;
    feats.append_row(prerecorded_.features.row(i));
    if (labels) labels->push_back(l);
  }
  return feats;
}

std::vector<double> Learner::z_statistics(const StreamBatch& batch) const {
  const ExtractorCache ex = extractor_forward(model_, batch.features, batch.domain);
  std::vector<double> stats(batch.size(), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < ex.z.cols(); ++j) s += ex.z(i, j);
    stats[i] = s / static_cast<double>(ex.z.cols());
  }
  return stats;
}

void Learner::log_event(std::size_t batch, const std::string& stream,
                        const std::string& event, std::size_t layer,
                        const std::string& detail) {
  events_.push_back({batch, stream, event, layer, detail});
}

ClusterLossResult Learner::reconstruction_loss(const Matrix& x, Domain domain) const {
  const Matrix* src = domain == Domain::Source ? &x : nullptr;
  const Matrix* tgt = domain == Domain::Target ? &x : nullptr;
  return compute_cluster_loss(src, tgt, nullptr);
}

void Learner::warm_up(std::size_t epochs) {
  if (prerecorded_.size() == 0) throw std::invalid_argument("warm_up: empty prerecorded batch");
  for (std::size_t e = 0; e < epochs; ++e) {
    // No clusters exist before initialization, so the cluster loss reduces to
    // the pure reconstruction terms here.
    ClusterLossResult res = reconstruction_loss(prerecorded_.features, prerecorded_.domain);
    ensure_finite(res.report.cluster_loss, res.grads);
    apply_updates(model_, res.grads, ParamGroup::Classifier);
    apply_updates(model_, res.grads, ParamGroup::Extractor);
  }
  warmed_up_ = true;
}

void Learner::init_clusters() {
  if (!warmed_up_) throw std::logic_error("init_clusters: warm-up has not run");
  if (initialized_) throw std::logic_error("init_clusters: already initialized; reset required");
  std::vector<int> labels;
  const Matrix feats = labelled_prerecorded_features(&labels);
  if (feats.rows() == 0) throw std::logic_error("init_clusters: no labelled prerecorded samples");

  for (std::size_t i = 0; i < feats.rows(); ++i) {
    const Vector z = extract_features(model_, feats.row(i), prerecorded_.domain);
    const std::vector<Vector> latents = encode(model_, z, model_.depth());
    for (std::size_t l = 0; l < model_.depth(); ++l)
      maybe_grow_cluster(model_.layers[l].clusters, latents[l]);
  }
  refresh_allegiance();
  initialized_ = true;
}

void Learner::refresh_allegiance() {
  std::vector<int> labels;
  const Matrix feats = labelled_prerecorded_features(&labels);
  if (feats.rows() == 0) return;
  Matrix z(feats.rows(), model_.extractor.natural_dim());
  for (std::size_t i = 0; i < feats.rows(); ++i)
    z.set_row(i, extract_features(model_, feats.row(i), prerecorded_.domain));
  const SaeCache sae = sae_encode(model_, z, model_.depth());
  const std::size_t n_classes = [&] {
    int max_label = 0;
    for (int l : labels) max_label = std::max(max_label, l);
    return static_cast<std::size_t>(max_label) + 1;
  }();
  for (std::size_t l = 0; l < model_.depth(); ++l) {
    if (model_.layers[l].clusters.empty()) continue;
    update_allegiance(model_.layers[l].clusters, sae.post[l], labels, n_classes,
                      config_.lambda);
  }
}

ClusterLossResult Learner::compute_cluster_loss(
    const Matrix* source_x, const Matrix* target_x,
    const std::vector<Matrix>* fixed_targets) const {
  struct StreamPass {
    ExtractorCache ex;
    SaeCache sae;
    EndToEndCache e2e;
  };
  std::vector<StreamPass> passes;
  std::size_t n_total = 0;
  if (source_x && source_x->rows() > 0) {
    StreamPass p;
    p.ex = extractor_forward(model_, *source_x, Domain::Source);
    p.sae = sae_encode(model_, p.ex.z, model_.depth());
    p.e2e = end_to_end_decode(model_, p.ex, p.sae);
    n_total += source_x->rows();
    passes.push_back(std::move(p));
  }
  if (target_x && target_x->rows() > 0) {
    StreamPass p;
    p.ex = extractor_forward(model_, *target_x, Domain::Target);
    p.sae = sae_encode(model_, p.ex.z, model_.depth());
    p.e2e = end_to_end_decode(model_, p.ex, p.sae);
    n_total += target_x->rows();
    passes.push_back(std::move(p));
  }
  if (n_total == 0) throw std::invalid_argument("compute_cluster_loss: no samples");

  ClusterLossResult out;
  const std::size_t depth = model_.depth();
  out.report.layer_recon.assign(depth, 0.0);
  out.report.layer_kl.assign(depth, 0.0);
  out.targets.assign(depth, Matrix());

  // End-to-end reconstruction: per-sample per-dimension MSE pooled over streams.
  for (StreamPass& p : passes) {
    const double denom = static_cast<double>(n_total) * static_cast<double>(p.ex.x.cols());
    out.report.recon_end_to_end += mse(p.ex.x, p.e2e.xhat) / denom;
    Matrix dxhat(p.ex.x.rows(), p.ex.x.cols());
    for (std::size_t i = 0; i < dxhat.size(); ++i)
      dxhat.data()[i] = 2.0 * (p.e2e.xhat.data()[i] - p.ex.x.data()[i]) / denom;
    end_to_end_backward(model_, p.ex, p.sae, p.e2e, dxhat, out.grads);
  }

  // Layer-wise terms: gradients stop at each layer's input.
  for (std::size_t l = 0; l < depth; ++l) {
    Matrix h_prev;
    for (StreamPass& p : passes) {
      const Matrix& src = l == 0 ? p.ex.z : p.sae.post[l - 1];
      for (std::size_t i = 0; i < src.rows(); ++i) h_prev.append_row(src.row(i));
    }
    const LayerReconCache cache = layer_recon_forward(model_, l, h_prev);
    const double denom = static_cast<double>(n_total) * static_cast<double>(h_prev.cols());
    out.report.layer_recon[l] = mse(h_prev, cache.rec) / denom;
    Matrix drec(cache.rec.rows(), cache.rec.cols());
    for (std::size_t i = 0; i < drec.size(); ++i)
      drec.data()[i] = 2.0 * (cache.rec.data()[i] - h_prev.data()[i]) / denom;

    Matrix dh_extra;
    const std::vector<Cluster>& clusters = model_.layers[l].clusters;
    if (switches_.kl_loss && !clusters.empty()) {
      Matrix target;
      if (fixed_targets && l < fixed_targets->size() && !(*fixed_targets)[l].empty()) {
        target = (*fixed_targets)[l];
      } else {
        target = target_distribution(soft_assign(cache.h, clusters, config_.lambda).phi);
      }
      out.targets[l] = target;
      const KlResult kl = kl_loss(cache.h, clusters, target, config_.lambda);
      const double w = config_.alpha2 / static_cast<double>(n_total);
      out.report.layer_kl[l] = kl.loss / static_cast<double>(n_total);
      dh_extra = kl.dlatents;
      for (double& x : dh_extra.data()) x *= w;
      Matrix dcent = kl.dcentroids;
      for (double& x : dcent.data()) x *= w;
      accumulate_grad(out.grads, "sae." + std::to_string(l) + ".centroids", dcent);
    }
    layer_recon_backward(model_, l, cache, drec, dh_extra, out.grads);
  }

  out.report.cluster_loss = out.report.recon_end_to_end;
  for (std::size_t l = 0; l < depth; ++l)
    out.report.cluster_loss += out.report.layer_recon[l] + config_.alpha2 * out.report.layer_kl[l];
  out.report.all_loss = out.report.cluster_loss;
  return out;
}

CdLossResult Learner::compute_cd_loss(const Matrix& source_x, const Matrix& target_x) const {
  if (source_x.rows() == 0 || target_x.rows() == 0)
    throw std::invalid_argument("compute_cd_loss: both batches must be non-empty");
  CdLossResult out;

  const ExtractorCache ex_s = extractor_forward(model_, source_x, Domain::Source);
  const ExtractorCache ex_t = extractor_forward(model_, target_x, Domain::Target);
  const DomainClassifierCache dc_s = domain_forward_batch(model_, ex_s.z);
  const DomainClassifierCache dc_t = domain_forward_batch(model_, ex_t.z);

  const double ns = static_cast<double>(source_x.rows());
  const double nt = static_cast<double>(target_x.rows());
  Matrix dlogit_s(dc_s.p.rows(), 1);
  for (std::size_t i = 0; i < dc_s.p.rows(); ++i) {
    out.loss += -std::log(dc_s.p(i, 0)) / ns;
    dlogit_s(i, 0) = (dc_s.p(i, 0) - 1.0) / ns;
  }
  Matrix dlogit_t(dc_t.p.rows(), 1);
  for (std::size_t i = 0; i < dc_t.p.rows(); ++i) {
    out.loss += -std::log(1.0 - dc_t.p(i, 0)) / nt;
    dlogit_t(i, 0) = dc_t.p(i, 0) / nt;
  }

  Matrix dz_s, dz_t;
  domain_backward(model_, ex_s.z, dc_s, dlogit_s, out.grads, &dz_s);
  domain_backward(model_, ex_t.z, dc_t, dlogit_t, out.grads, &dz_t);
  extractor_backward(model_, ex_s, dz_s, out.grads);
  extractor_backward(model_, ex_t, dz_t, out.grads);
  return out;
}

void Learner::new_layer_init(std::size_t batch_index, const std::string& stream) {
  const std::size_t new_layer = model_.depth() - 1;
  log_event(batch_index, stream, "add_layer", new_layer,
            "width=" + std::to_string(model_.layers[new_layer].width()));

  // Lower layers are frozen here, so the new layer's input is constant.
  Matrix z(prerecorded_.size(), model_.extractor.natural_dim());
  for (std::size_t i = 0; i < prerecorded_.size(); ++i)
    z.set_row(i, extract_features(model_, prerecorded_.features.row(i), prerecorded_.domain));
  const SaeCache below = sae_encode(model_, z, new_layer);
  const Matrix& h_prev = new_layer == 0 ? z : below.post.back();

  for (std::size_t e = 0; e < config_.init_epochs; ++e) {
    const LayerReconCache cache = layer_recon_forward(model_, new_layer, h_prev);
    const double denom = static_cast<double>(h_prev.rows()) * static_cast<double>(h_prev.cols());
    Matrix drec(cache.rec.rows(), cache.rec.cols());
    for (std::size_t i = 0; i < drec.size(); ++i)
      drec.data()[i] = 2.0 * (cache.rec.data()[i] - h_prev.data()[i]) / denom;
    GradMap grads;
    layer_recon_backward(model_, new_layer, cache, drec, Matrix(), grads);
    ensure_finite(0.0, grads);
    apply_updates(model_, grads, ParamGroup::Classifier);
  }

  std::vector<int> labels;
  const Matrix feats = labelled_prerecorded_features(&labels);
  for (std::size_t i = 0; i < feats.rows(); ++i) {
    const Vector zi = extract_features(model_, feats.row(i), prerecorded_.domain);
    const std::vector<Vector> latents = encode(model_, zi, model_.depth());
    maybe_grow_cluster(model_.layers[new_layer].clusters, latents[new_layer]);
  }
  refresh_allegiance();
}

LossReport Learner::train_on_batch_pair(const StreamBatch* source, const StreamBatch* target,
                                        bool source_live, bool target_live) {
  if (!initialized_) throw std::logic_error("train_on_batch_pair: model not initialized");
  const StreamBatch* live_any = source_live && source ? source : target;
  const std::size_t batch_index = live_any ? live_any->batch_index : 0;

  std::vector<std::pair<const StreamBatch*, bool>> streams{{source, source_live},
                                                           {target, target_live}};
  for (auto& [batch, live] : streams) {
    if (batch && live && batch->labelled_count() > 0)
      throw std::invalid_argument("train_on_batch_pair: stream batch carries training labels");
  }

  LossReport report;

  // (1) Drift detection on the natural features of each live stream; a drift
  // grows a new layer which is then initialized from the prerecorded batch.
  if (switches_.structure_learning) {
    for (auto& [batch, live] : streams) {
      if (!batch || !live) continue;
      DriftDetector& det =
          batch->domain == Domain::Source ? source_detector_ : target_detector_;
      const DriftState state = det.observe_batch(z_statistics(*batch));
      if (state == DriftState::Warning) {
        log_event(batch->batch_index, domain_name(batch->domain), "warning", 0, "");
      } else if (state == DriftState::Drift) {
        log_event(batch->batch_index, domain_name(batch->domain), "drift", 0, "");
        add_layer(model_, next_seed());
        new_layer_init(batch->batch_index, domain_name(batch->domain));
        det.reset();
      }
    }
  }

  // (2) SPC node growing / pruning per layer on the pooled live batch.
  if (switches_.structure_learning) {
    std::vector<std::pair<const Matrix*, Domain>> live_feats;
    for (auto& [batch, live] : streams) {
      if (batch && live) live_feats.emplace_back(&batch->features, batch->domain);
    }
    for (std::size_t l = 0; l < model_.depth(); ++l) {
      // Fresh pooled latents: earlier layers may just have mutated.
      Matrix h_prev;
      for (auto& [x, domain] : live_feats) {
        const ExtractorCache ex = extractor_forward(model_, *x, domain);
        if (l == 0) {
          for (std::size_t i = 0; i < ex.z.rows(); ++i) h_prev.append_row(ex.z.row(i));
        } else {
          const SaeCache sae = sae_encode(model_, ex.z, l);
          for (std::size_t i = 0; i < sae.post.back().rows(); ++i)
            h_prev.append_row(sae.post.back().row(i));
        }
      }
      if (h_prev.rows() == 0) break;
      LayerState& layer = model_.layers[l];
      const LayerReconCache cache = layer_recon_forward(model_, l, h_prev);
      double bias_sum = 0.0, var_sum = 0.0;
      for (std::size_t i = 0; i < h_prev.rows(); ++i) {
        const ObserveResult obs = observe_layer(layer.spc, h_prev.row(i), cache.rec.row(i));
        bias_sum += obs.bias;
        var_sum += obs.variance;
        layer.note_activation(cache.h.row(i));
      }
      const double bias = bias_sum / static_cast<double>(h_prev.rows());
      const double variance = var_sum / static_cast<double>(h_prev.rows());
      if (should_grow_node(layer.spc, bias)) {
        grow_node(model_, l, h_prev, next_seed());
        log_event(batch_index, "", "grow_node", l,
                  "width=" + std::to_string(layer.width()));
      } else if (should_prune_node(layer.spc, variance)) {
        const std::optional<std::size_t> victim = prune_candidate(layer.contrib_mean);
        if (victim && prune_node(model_, l, *victim)) {
          log_event(batch_index, "", "prune_node", l,
                    "node=" + std::to_string(*victim));
        } else {
          ++model_.prune_suppressed;
        }
      }
    }
  }

  const Matrix* cluster_src = source && source_live ? &source->features : nullptr;
  const Matrix* cluster_tgt = target && target_live ? &target->features : nullptr;

  try {
    // (3) Clustering-loss epochs: the auxiliary target is recomputed from each
    // epoch's first forward pass and held constant within the epoch.
    for (std::size_t e = 0; e < config_.epochs_per_batch; ++e) {
      ClusterLossResult res = compute_cluster_loss(cluster_src, cluster_tgt, nullptr);
      ensure_finite(res.report.cluster_loss, res.grads);
      apply_updates(model_, res.grads, ParamGroup::Classifier);
      apply_updates(model_, res.grads, ParamGroup::Extractor);
      report = res.report;
    }

    // (4) Cross-domain epochs: domain classifier descends the scaled loss,
    // the extractor receives the reversed gradient.
    if (switches_.cd_loss && source && target) {
      if (source && !source_live)
        log_event(batch_index, "source", "batch_reuse", 0, "domain loss only");
      if (target && !target_live)
        log_event(batch_index, "target", "batch_reuse", 0, "domain loss only");
      for (std::size_t e = 0; e < config_.domain_epochs_per_batch; ++e) {
        CdLossResult res = compute_cd_loss(source->features, target->features);
        ensure_finite(res.loss, res.grads);
        GradMap scaled;
        for (const auto& [name, g] : res.grads) {
          if (param_group(name) == ParamGroup::DomainClassifier) {
            Matrix s = g;
            for (double& x : s.data()) x *= config_.alpha1;
            scaled.emplace(name, std::move(s));
          } else {
            scaled.emplace(name, reverse_gradient(g, config_.alpha1));
          }
        }
        apply_updates(model_, scaled, ParamGroup::DomainClassifier);
        apply_updates(model_, scaled, ParamGroup::Extractor);
        report.cd_loss = res.loss;
      }
    }
  } catch (const NumericError&) {
    ++skipped_batches_;
    log_event(batch_index, "", "numeric_failure", 0, "batch skipped");
    report.skipped = true;
    return report;
  }

  // (5) Cluster statistics and growth for every live sample in every layer.
  for (auto& [batch, live] : streams) {
    if (!batch || !live) continue;
    const ExtractorCache ex = extractor_forward(model_, batch->features, batch->domain);
    const SaeCache sae = sae_encode(model_, ex.z, model_.depth());
    for (std::size_t i = 0; i < batch->size(); ++i) {
      for (std::size_t l = 0; l < model_.depth(); ++l)
        maybe_grow_cluster(model_.layers[l].clusters, sae.post[l].row(i));
    }
  }

  // (6) Allegiance refresh from the prerecorded latents under current weights.
  refresh_allegiance();

  report.all_loss = report.cluster_loss - config_.alpha1 * report.cd_loss;
  return report;
}

double Learner::evaluate_batch(const StreamBatch& batch) const {
  if (!batch.eval_labels)
    throw std::invalid_argument("evaluate_batch: batch has no evaluation labels");
  const std::vector<int>& truth = batch.eval_labels->labels;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const PredictionTrace trace = predict(model_, batch.features.row(i), batch.domain);
    if (trace.predicted == truth[i]) ++correct;
  }
  return batch.size() == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(batch.size());
}

std::size_t Learner::total_nodes() const {
  std::size_t n = 0;
  for (const LayerState& l : model_.layers) n += l.width();
  return n;
}

std::size_t Learner::total_clusters() const {
  std::size_t n = 0;
  for (const LayerState& l : model_.layers) n += l.clusters.size();
  return n;
}

}  // namespace leopard

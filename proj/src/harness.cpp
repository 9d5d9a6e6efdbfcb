#include "leopard/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "leopard/errors.hpp"

namespace leopard {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key))
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

std::vector<std::uint64_t> ExperimentConfig::effective_seeds() const {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out;
  for (std::size_t i = 1; i <= n_runs; ++i) out.push_back(static_cast<std::uint64_t>(i));
  return out;
}

void ExperimentConfig::validate() const {
  stream.validate();
  learner.validate();
  if (!seeds.empty() && seeds.size() != n_runs)
    throw std::invalid_argument("config: seeds length must equal n_runs");
  if (n_runs == 0) throw std::invalid_argument("config: n_runs must be >= 1");
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig c;
  reject_unknown_keys(
      j, {"stream", "learner", "model", "n_runs", "seeds", "ablation", "output_dir"}, "root");
  if (j.contains("stream")) {
    const json& s = j.at("stream");
    reject_unknown_keys(s,
                        {"n_source_batches", "n_target_batches", "source_batch_size",
                         "target_batch_size", "n_classes", "label_proportion",
                         "prerecorded_size", "source_drift_batch", "target_drift_batch",
                         "rng_seed", "source_dim", "target_dim"},
                        "stream");
    read_field(s, "n_source_batches", c.stream.n_source_batches);
    read_field(s, "n_target_batches", c.stream.n_target_batches);
    read_field(s, "source_batch_size", c.stream.source_batch_size);
    read_field(s, "target_batch_size", c.stream.target_batch_size);
    read_field(s, "n_classes", c.stream.n_classes);
    read_field(s, "label_proportion", c.stream.label_proportion);
    read_field(s, "prerecorded_size", c.stream.prerecorded_size);
    read_field(s, "source_drift_batch", c.stream.source_drift_batch);
    read_field(s, "target_drift_batch", c.stream.target_drift_batch);
    read_field(s, "rng_seed", c.stream.rng_seed);
    read_field(s, "source_dim", c.stream.source_dim);
    read_field(s, "target_dim", c.stream.target_dim);
  }
  if (j.contains("learner")) {
    const json& l = j.at("learner");
    reject_unknown_keys(l,
                        {"alpha1", "alpha2", "lambda", "learning_rate", "momentum",
                         "init_epochs", "epochs_per_batch", "domain_epochs_per_batch"},
                        "learner");
    read_field(l, "alpha1", c.learner.alpha1);
    read_field(l, "alpha2", c.learner.alpha2);
    read_field(l, "lambda", c.learner.lambda);
    read_field(l, "learning_rate", c.learner.learning_rate);
    read_field(l, "momentum", c.learner.momentum);
    read_field(l, "init_epochs", c.learner.init_epochs);
    read_field(l, "epochs_per_batch", c.learner.epochs_per_batch);
    read_field(l, "domain_epochs_per_batch", c.learner.domain_epochs_per_batch);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown_keys(m,
                        {"adapter_dim", "extractor_width1", "extractor_width2",
                         "initial_layer_width", "dc_hidden_width"},
                        "model");
    read_field(m, "adapter_dim", c.architecture.adapter_dim);
    read_field(m, "extractor_width1", c.architecture.extractor_width1);
    read_field(m, "extractor_width2", c.architecture.extractor_width2);
    read_field(m, "initial_layer_width", c.architecture.initial_layer_width);
    read_field(m, "dc_hidden_width", c.architecture.dc_hidden_width);
  }
  read_field(j, "n_runs", c.n_runs);
  read_field(j, "seeds", c.seeds);
  if (j.contains("ablation")) {
    const json& a = j.at("ablation");
    reject_unknown_keys(a, {"structure_learning", "kl_loss", "cd_loss"}, "ablation");
    read_field(a, "structure_learning", c.ablation.structure_learning);
    read_field(a, "kl_loss", c.ablation.kl_loss);
    read_field(a, "cd_loss", c.ablation.cd_loss);
  }
  read_field(j, "output_dir", c.output_dir);
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_experiment_config(text);
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json j;
  j["stream"] = {{"n_source_batches", c.stream.n_source_batches},
                 {"n_target_batches", c.stream.n_target_batches},
                 {"source_batch_size", c.stream.source_batch_size},
                 {"target_batch_size", c.stream.target_batch_size},
                 {"n_classes", c.stream.n_classes},
                 {"label_proportion", c.stream.label_proportion},
                 {"prerecorded_size", c.stream.prerecorded_size},
                 {"source_drift_batch", c.stream.source_drift_batch},
                 {"target_drift_batch", c.stream.target_drift_batch},
                 {"rng_seed", c.stream.rng_seed},
                 {"source_dim", c.stream.source_dim},
                 {"target_dim", c.stream.target_dim}};
  j["learner"] = {{"alpha1", c.learner.alpha1},
                  {"alpha2", c.learner.alpha2},
                  {"lambda", c.learner.lambda},
                  {"learning_rate", c.learner.learning_rate},
                  {"momentum", c.learner.momentum},
                  {"init_epochs", c.learner.init_epochs},
                  {"epochs_per_batch", c.learner.epochs_per_batch},
                  {"domain_epochs_per_batch", c.learner.domain_epochs_per_batch}};
  j["model"] = {{"adapter_dim", c.architecture.adapter_dim},
                {"extractor_width1", c.architecture.extractor_width1},
                {"extractor_width2", c.architecture.extractor_width2},
                {"initial_layer_width", c.architecture.initial_layer_width},
                {"dc_hidden_width", c.architecture.dc_hidden_width}};
  j["n_runs"] = c.n_runs;
  j["seeds"] = c.seeds;
  j["ablation"] = {{"structure_learning", c.ablation.structure_learning},
                   {"kl_loss", c.ablation.kl_loss},
                   {"cd_loss", c.ablation.cd_loss}};
  j["output_dir"] = c.output_dir;
  return j.dump(2);
}

AblationSwitches ablation_by_name(const std::string& name) {
  if (name == "A") return {false, false, false};
  if (name == "B") return {false, true, true};
  if (name == "C") return {true, false, false};
  if (name == "full") return {true, true, true};
  throw std::invalid_argument("ablation: unknown configuration '" + name +
                              "' (expected A, B, C, or full)");
}

namespace {

ModelConfig make_model_config(const ExperimentConfig& config, std::uint64_t seed) {
  ModelConfig mc;
  mc.source_dim = config.stream.source_dim;
  mc.target_dim = config.stream.target_dim;
  mc.adapter_dim = config.architecture.adapter_dim;
  mc.extractor_width1 = config.architecture.extractor_width1;
  mc.extractor_width2 = config.architecture.extractor_width2;
  mc.initial_layer_width = config.architecture.initial_layer_width;
  mc.dc_hidden_width = config.architecture.dc_hidden_width;
  mc.init_seed = seed;
  return mc;
}

MetricsRecord make_record(std::uint64_t seed, const StreamBatch& batch, double accuracy,
                          const Learner& learner, const LossReport& losses,
                          std::vector<StructuralEvent> events) {
  MetricsRecord r;
  r.run_seed = seed;
  r.batch_index = batch.batch_index;
  r.stream = domain_name(batch.domain);
  r.accuracy = accuracy;
  r.n_layers = learner.model().depth();
  r.total_nodes = learner.total_nodes();
  r.total_clusters = learner.total_clusters();
  r.losses = losses;
  r.events = std::move(events);
  return r;
}

void finish_run(RunResult& run) {
  std::vector<double> target_acc, source_acc;
  for (const MetricsRecord& r : run.records) {
    (r.stream == "target" ? target_acc : source_acc).push_back(r.accuracy);
  }
  run.mean_target_accuracy = mean_of(target_acc);
  run.mean_source_accuracy = mean_of(source_acc);
}

ExperimentSummary summarize(const std::vector<RunResult>& runs) {
  ExperimentSummary s;
  for (const RunResult& r : runs) {
    s.per_run_target_accuracy.push_back(r.mean_target_accuracy);
    s.per_run_source_accuracy.push_back(r.mean_source_accuracy);
    s.seeds.push_back(r.seed);
  }
  s.mean_accuracy = mean_of(s.per_run_target_accuracy);
  s.std_accuracy = sample_std(s.per_run_target_accuracy);
  return s;
}

void ensure_output_dir(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const std::string probe = dir + "/.write_probe";
  std::ofstream test(probe);
  if (!test) throw IoError("output directory not writable: " + dir);
  test.close();
  std::filesystem::remove(probe, ec);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  ensure_output_dir(config.output_dir);

  ExperimentResult result;
  for (const std::uint64_t seed : config.effective_seeds()) {
    StreamConfig sc = config.stream;
    sc.rng_seed = seed;
    SyntheticStreams streams = generate_synthetic_streams(sc);
    mask_labels(streams.prerecorded, streams.source, streams.target, sc);

    LearnerConfig lc = config.learner;
    lc.lambda = config.learner.lambda;
    Learner learner(make_model_config(config, seed), lc, config.ablation,
                    streams.prerecorded);
    learner.warm_up();
    learner.init_clusters();

    RunResult run;
    run.seed = seed;
    std::size_t events_seen = 0;
    const std::size_t n_batches = std::max(streams.source.size(), streams.target.size());
    for (std::size_t k = 0; k < n_batches; ++k) {
      const bool source_live = k < streams.source.size();
      const bool target_live = k < streams.target.size();
      const StreamBatch* src = source_live ? &streams.source[k] : &streams.source.back();
      const StreamBatch* tgt = target_live ? &streams.target[k] : &streams.target.back();

      double target_acc = 0.0, source_acc = 0.0;
      if (target_live) {
        target_acc = learner.evaluate_batch(*tgt);
        run.protocol.push_back({"eval", tgt->batch_index, "target"});
      }
      if (source_live) {
        source_acc = learner.evaluate_batch(*src);
        run.protocol.push_back({"eval", src->batch_index, "source"});
      }

      const LossReport report = learner.train_on_batch_pair(src, tgt, source_live, target_live);
      run.protocol.push_back({"train", std::max(src->batch_index, tgt->batch_index), ""});

      std::vector<StructuralEvent> fresh(learner.events().begin() +
                                             static_cast<std::ptrdiff_t>(events_seen),
                                         learner.events().end());
      events_seen = learner.events().size();
      if (target_live)
        run.records.push_back(make_record(seed, *tgt, target_acc, learner, report, fresh));
      if (source_live)
        run.records.push_back(make_record(seed, *src, source_acc, learner, report, {}));
    }
    run.skipped_batches = learner.skipped_batches();
    finish_run(run);
    result.runs.push_back(std::move(run));
  }
  result.summary = summarize(result.runs);
  if (!config.output_dir.empty()) write_experiment_outputs(config, result);
  return result;
}

// ---- AE+KMeans baseline ----

namespace {

double kmeans_pass(const Matrix& points, std::size_t k, std::mt19937_64& rng,
                   Matrix& centroids, std::vector<std::size_t>& assignment) {
  const std::size_t n = points.rows();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  // k-means++ seeding
  std::vector<std::size_t> chosen{pick(rng)};
  Vector d2(n, 0.0);
  while (chosen.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c : chosen)
        best = std::min(best, squared_distance(points.row(i), points.row(c)));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      chosen.push_back(pick(rng));
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double r = u(rng);
    std::size_t next = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      r -= d2[i];
      if (r <= 0.0) {
        next = i;
        break;
      }
    }
    chosen.push_back(next);
  }
  centroids = Matrix(k, points.cols());
  for (std::size_t j = 0; j < k; ++j) centroids.set_row(j, points.row(chosen[j]));

  assignment.assign(n, 0);
  double inertia = 0.0;
  for (std::size_t iter = 0; iter < 100; ++iter) {
    bool changed = false;
    inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        const double d = squared_distance(points.row(i), centroids.row(j));
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      if (assignment[i] != best) {
        assignment[i] = best;
        changed = true;
      }
      inertia += best_d;
    }
    Matrix sums(k, points.cols(), 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assignment[i]];
      for (std::size_t d = 0; d < points.cols(); ++d)
        sums(assignment[i], d) += points(i, d);
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) {
        // Re-seed an empty cluster at the farthest point.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = squared_distance(points.row(i), centroids.row(assignment[i]));
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centroids.set_row(j, points.row(far));
        changed = true;
        continue;
      }
      for (std::size_t d = 0; d < points.cols(); ++d)
        centroids(j, d) = sums(j, d) / static_cast<double>(counts[j]);
    }
    if (!changed) break;
  }
  return inertia;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, std::size_t restarts,
                    std::uint64_t seed) {
  if (points.rows() == 0) throw std::invalid_argument("kmeans: no points");
  k = std::min<std::size_t>(k, points.rows());
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    std::mt19937_64 rng(seed * 613ULL + r);
    Matrix centroids;
    std::vector<std::size_t> assignment;
    const double inertia = kmeans_pass(points, k, rng, centroids, assignment);
    if (inertia < best.inertia) {
      best = {std::move(centroids), std::move(assignment), inertia};
    }
  }
  return best;
}

namespace {

Matrix bottleneck_latents(const Learner& learner, const Matrix& features, Domain domain) {
  const ExtractorCache ex = extractor_forward(learner.model(), features, domain);
  const SaeCache sae = sae_encode(learner.model(), ex.z, learner.model().depth());
  return sae.post.back();
}

double baseline_evaluate(const Learner& learner, const StreamBatch& batch,
                         const StreamBatch& prerecorded, std::size_t n_classes,
                         std::uint64_t seed) {
  const Matrix latents = bottleneck_latents(learner, batch.features, batch.domain);
  const std::size_t k = std::max<std::size_t>(n_classes, 10);
  const KMeansResult km = kmeans(latents, k, 10, seed);

  // Cluster-to-class map via allegiance of the prerecorded labelled latents.
  std::vector<Cluster> clusters;
  for (std::size_t j = 0; j < km.centroids.rows(); ++j)
    clusters.emplace_back(km.centroids.row(j));
  std::vector<int> labels;
  Matrix feats;
  for (std::size_t i = 0; i < prerecorded.size(); ++i) {
    const int l = (*prerecorded.labels)[i];
    if (l < 0) continue;
    feats.append_row(prerecorded.features.row(i));
    labels.push_back(l);
  }
  const Matrix pre_latents = bottleneck_latents(learner, feats, prerecorded.domain);
  update_allegiance(clusters, pre_latents, labels, n_classes, learner.config().lambda);

  const std::vector<int>& truth = batch.eval_labels->labels;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vector& row = clusters[km.assignment[i]].allegiance;
    int pred = 0;
    for (std::size_t o = 1; o < row.size(); ++o) {
      if (row[o] > row[pred]) pred = static_cast<int>(o);
    }
    if (pred == truth[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch.size());
}

}  // namespace

ExperimentResult run_baseline_ae_kmeans(const ExperimentConfig& config) {
  config.validate();
  ensure_output_dir(config.output_dir);

  ExperimentResult result;
  for (const std::uint64_t seed : config.effective_seeds()) {
    StreamConfig sc = config.stream;
    sc.rng_seed = seed;
    SyntheticStreams streams = generate_synthetic_streams(sc);
    mask_labels(streams.prerecorded, streams.source, streams.target, sc);

    // Reconstruction-only learner with a static structure and no clustering.
    AblationSwitches sw{false, false, false};
    Learner learner(make_model_config(config, seed), config.learner, sw, streams.prerecorded);
    learner.warm_up();

    RunResult run;
    run.seed = seed;
    const std::size_t n_batches = std::max(streams.source.size(), streams.target.size());
    for (std::size_t k = 0; k < n_batches; ++k) {
      const bool source_live = k < streams.source.size();
      const bool target_live = k < streams.target.size();

      LossReport report;
      if (target_live) {
        const StreamBatch& tgt = streams.target[k];
        const double acc =
            baseline_evaluate(learner, tgt, streams.prerecorded, sc.n_classes, seed + k);
        run.protocol.push_back({"eval", tgt.batch_index, "target"});
        run.records.push_back(make_record(seed, tgt, acc, learner, report, {}));
      }
      if (source_live) {
        const StreamBatch& src = streams.source[k];
        const double acc =
            baseline_evaluate(learner, src, streams.prerecorded, sc.n_classes, seed + k);
        run.protocol.push_back({"eval", src.batch_index, "source"});
        run.records.push_back(make_record(seed, src, acc, learner, report, {}));
      }

      // Train on reconstruction only, pooled over the live batches.
      const Matrix* src_x = source_live ? &streams.source[k].features : nullptr;
      const Matrix* tgt_x = target_live ? &streams.target[k].features : nullptr;
      for (std::size_t e = 0; e < config.learner.epochs_per_batch; ++e) {
        ClusterLossResult res = learner.compute_cluster_loss(src_x, tgt_x, nullptr);
        apply_updates(learner.model(), res.grads, ParamGroup::Classifier);
        apply_updates(learner.model(), res.grads, ParamGroup::Extractor);
      }
      run.protocol.push_back({"train", k + 1, ""});
    }
    finish_run(run);
    result.runs.push_back(std::move(run));
  }
  result.summary = summarize(result.runs);
  if (!config.output_dir.empty()) write_experiment_outputs(config, result, "baseline_");
  return result;
}

double proxy_h_divergence(const Matrix& source_latents, const Matrix& target_latents,
                          std::uint64_t seed) {
  if (source_latents.rows() < 10 || target_latents.rows() < 10)
    throw std::invalid_argument("proxy_h_divergence: need >= 10 latents per stream");
  if (source_latents.cols() != target_latents.cols())
    throw std::invalid_argument("proxy_h_divergence: latent dimensions differ");

  const std::size_t dim = source_latents.cols();
  std::mt19937_64 rng(seed * 7717ULL + 3);

  auto split = [&rng](const Matrix& m) {
    std::vector<std::size_t> idx(m.rows());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    Matrix train, held;
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < idx.size() / 2 ? train : held).append_row(m.row(idx[i]));
    return std::pair<Matrix, Matrix>(std::move(train), std::move(held));
  };
  auto [train_s, held_s] = split(source_latents);
  auto [train_t, held_t] = split(target_latents);

  // Fresh single-hidden-layer probe trained with full-batch gradient steps.
  const std::size_t hidden = 8;
  Matrix wh = xavier_init(dim, hidden, seed + 1);
  Vector bh(hidden, 0.0);
  Matrix wo = xavier_init(hidden, 1, seed + 2);
  double bo = 0.0;

  auto forward = [&](const Vector& x, Vector* q_out) {
    Vector q = matvec(wh, x);
    for (std::size_t j = 0; j < hidden; ++j) q[j] = relu(q[j] + bh[j]);
    double logit = bo + dot(wo.row(0), q);
    logit = std::clamp(logit, -30.0, 30.0);
    if (q_out) *q_out = q;
    return sigmoid(logit);
  };

  const double lr = 0.1;
  for (std::size_t epoch = 0; epoch < 200; ++epoch) {
    Matrix gwh(hidden, dim, 0.0);
    Vector gbh(hidden, 0.0), gwo(hidden, 0.0);
    double gbo = 0.0;
    const double n_s = static_cast<double>(train_s.rows());
    const double n_t = static_cast<double>(train_t.rows());
    auto accumulate = [&](const Matrix& batch, double label, double scale) {
      for (std::size_t i = 0; i < batch.rows(); ++i) {
        const Vector x = batch.row(i);
        Vector q;
        const double p = forward(x, &q);
        const double dlogit = (p - label) * scale;
        for (std::size_t j = 0; j < hidden; ++j) {
          gwo[j] += dlogit * q[j];
          const double dq = q[j] > 0.0 ? dlogit * wo(0, j) : 0.0;
          gbh[j] += dq;
          for (std::size_t d = 0; d < dim; ++d) gwh(j, d) += dq * x[d];
        }
        gbo += dlogit;
      }
    };
    accumulate(train_s, 1.0, 1.0 / n_s);
    accumulate(train_t, 0.0, 1.0 / n_t);
    for (std::size_t j = 0; j < hidden; ++j) {
      for (std::size_t d = 0; d < dim; ++d) wh(j, d) -= lr * gwh(j, d);
      bh[j] -= lr * gbh[j];
      wo(0, j) -= lr * gwo[j];
    }
    bo -= lr * gbo;
  }

  double err = 0.0;
  double miss_s = 0.0;
  for (std::size_t i = 0; i < held_s.rows(); ++i) {
    if (forward(held_s.row(i), nullptr) <= 0.5) miss_s += 1.0;
  }
  err += miss_s / static_cast<double>(held_s.rows());
  double miss_t = 0.0;
  for (std::size_t i = 0; i < held_t.rows(); ++i) {
    if (forward(held_t.row(i), nullptr) > 0.5) miss_t += 1.0;
  }
  err += miss_t / static_cast<double>(held_t.rows());

  return std::clamp(2.0 * (1.0 - err), 0.0, 2.0);
}

std::vector<SweepRow> label_proportion_sweep(const ExperimentConfig& config,
                                             const std::vector<double>& proportions) {
  std::vector<SweepRow> rows;
  for (double p : proportions) {
    if (p <= 0.0 || p > 1.0)
      throw std::invalid_argument("label_proportion_sweep: proportions must be in (0,1]");
    ExperimentConfig c = config;
    c.stream.label_proportion = p;
    c.stream.prerecorded_size = 0;  // re-derive
    c.output_dir.clear();
    const ExperimentResult r = run_experiment(c);
    rows.push_back({p, r.summary.mean_accuracy, r.summary.std_accuracy});
  }
  return rows;
}

double majority_class_rate(const std::vector<StreamBatch>& batches) {
  std::map<int, std::size_t> counts;
  std::size_t total = 0;
  for (const StreamBatch& b : batches) {
    if (!b.eval_labels) continue;
    for (int l : b.eval_labels->labels) {
      ++counts[l];
      ++total;
    }
  }
  std::size_t best = 0;
  for (const auto& [label, count] : counts) best = std::max(best, count);
  return total == 0 ? 0.0 : static_cast<double>(best) / static_cast<double>(total);
}

// ---- persistence ----

namespace {

json event_to_json(const StructuralEvent& e) {
  return json{{"batch", e.batch},
              {"stream", e.stream},
              {"event", e.event},
              {"layer", e.layer},
              {"detail", e.detail}};
}

}  // namespace

std::string metrics_record_to_json(const MetricsRecord& r) {
  json j;
  j["run_seed"] = r.run_seed;
  j["batch_index"] = r.batch_index;
  j["stream"] = r.stream;
  j["accuracy"] = r.accuracy;
  j["n_layers"] = r.n_layers;
  j["total_nodes"] = r.total_nodes;
  j["total_clusters"] = r.total_clusters;
  j["losses"] = {{"recon_end_to_end", r.losses.recon_end_to_end},
                 {"cluster", r.losses.cluster_loss},
                 {"cd", r.losses.cd_loss},
                 {"all", r.losses.all_loss}};
  j["events"] = json::array();
  for (const StructuralEvent& e : r.events) j["events"].push_back(event_to_json(e));
  return j.dump();
}

std::string summary_to_json(const ExperimentSummary& s) {
  json j;
  j["mean_accuracy"] = s.mean_accuracy;
  j["std_accuracy"] = s.std_accuracy;
  j["per_run_target_accuracy"] = s.per_run_target_accuracy;
  j["per_run_source_accuracy"] = s.per_run_source_accuracy;
  j["seeds"] = s.seeds;
  return j.dump(2);
}

void write_experiment_outputs(const ExperimentConfig& config, const ExperimentResult& result,
                              const std::string& prefix) {
  if (config.output_dir.empty()) return;
  ensure_output_dir(config.output_dir);
  const std::string base = config.output_dir + "/" + prefix;

  std::ofstream metrics(base + "metrics.jsonl");
  if (!metrics) throw IoError("cannot write " + base + "metrics.jsonl");
  for (const RunResult& run : result.runs) {
    for (const MetricsRecord& r : run.records) metrics << metrics_record_to_json(r) << "\n";
  }

  std::ofstream summary(base + "summary.json");
  if (!summary) throw IoError("cannot write " + base + "summary.json");
  summary << summary_to_json(result.summary) << "\n";

  std::ofstream events(base + "events.jsonl");
  if (!events) throw IoError("cannot write " + base + "events.jsonl");
  for (const RunResult& run : result.runs) {
    for (const MetricsRecord& r : run.records) {
      for (const StructuralEvent& e : r.events) {
        json ej = event_to_json(e);
        ej["run_seed"] = run.seed;
        events << ej.dump() << "\n";
      }
    }
  }
}

}  // namespace leopard

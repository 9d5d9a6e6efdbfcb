#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "leopard/network.hpp"
#include "leopard/stream.hpp"
#include "leopard/structure.hpp"

namespace leopard {

struct LearnerConfig {
  double alpha1 = 0.1;   // cross-domain loss trade-off
  double alpha2 = 1.0;   // KL regularization constant
  double lambda = 1.0;   // student-t degrees of freedom
  double learning_rate = 0.01;
  double momentum = 0.95;
  std::size_t init_epochs = 100;            // warm-up / new-layer initialization
  std::size_t epochs_per_batch = 5;         // clustering-loss epochs per batch
  std::size_t domain_epochs_per_batch = 1;  // cross-domain epochs per batch

  void validate() const;
};

struct AblationSwitches {
  bool structure_learning = true;
  bool kl_loss = true;
  bool cd_loss = true;
};

struct LossReport {
  double recon_end_to_end = 0.0;
  std::vector<double> layer_recon;
  std::vector<double> layer_kl;  // per-sample mean KL per layer (unweighted)
  double cluster_loss = 0.0;     // L1 + sum_l(recon_l + alpha2*kl_l)
  double cd_loss = 0.0;
  double all_loss = 0.0;  // cluster_loss - alpha1*cd_loss
  bool skipped = false;
};

struct ClusterLossResult {
  LossReport report;
  GradMap grads;
  std::vector<Matrix> targets;  // auxiliary distributions actually used, per layer
};

struct CdLossResult {
  double loss = 0.0;
  GradMap grads;  // dc.* plus raw (unreversed) extractor entries
};

/// Drives one model through the stream protocol: warm-up, cluster
/// initialization from the scarce labels, per-batch joint optimization, and
/// the structural-learning hooks.
class Learner {
 public:
  Learner(const ModelConfig& model_config, LearnerConfig config, AblationSwitches switches,
          StreamBatch prerecorded);

  /// Reconstruction-only pretraining on the prerecorded batch.
  void warm_up() { warm_up(config_.init_epochs); }
  void warm_up(std::size_t epochs);

  /// Seeds every layer's clusters from the labelled prerecorded samples and
  /// computes the first allegiance rows. Refuses to run twice.
  void init_clusters();

  /// One prequential training step on a batch pair. Reused (exhausted-stream)
  /// batches participate in the domain loss only.
  LossReport train_on_batch_pair(const StreamBatch* source, const StreamBatch* target,
                                 bool source_live = true, bool target_live = true);

  /// Fraction of correct predictions against the hidden evaluation labels.
  /// Never mutates the model.
  double evaluate_batch(const StreamBatch& batch) const;

  ClusterLossResult compute_cluster_loss(const Matrix* source_x, const Matrix* target_x,
                                         const std::vector<Matrix>* fixed_targets = nullptr) const;
  CdLossResult compute_cd_loss(const Matrix& source_x, const Matrix& target_x) const;

  const LeopardModel& model() const { return model_; }
  LeopardModel& model() { return model_; }
  const LearnerConfig& config() const { return config_; }
  const AblationSwitches& switches() const { return switches_; }
  const std::vector<StructuralEvent>& events() const { return events_; }
  std::size_t skipped_batches() const { return skipped_batches_; }
  bool initialized() const { return initialized_; }
  const StreamBatch& prerecorded() const { return prerecorded_; }

  std::size_t total_nodes() const;
  std::size_t total_clusters() const;

 private:
  void new_layer_init(std::size_t batch_index, const std::string& stream);
  ClusterLossResult reconstruction_loss(const Matrix& x, Domain domain) const;
  void refresh_allegiance();
  Matrix labelled_prerecorded_features(std::vector<int>* labels) const;
  std::vector<double> z_statistics(const StreamBatch& batch) const;
  void log_event(std::size_t batch, const std::string& stream, const std::string& event,
                 std::size_t layer, const std::string& detail);
  std::uint64_t next_seed() { return seed_counter_++; }

  LeopardModel model_;
  LearnerConfig config_;
  AblationSwitches switches_;
  StreamBatch prerecorded_;
  DriftDetector source_detector_;
  DriftDetector target_detector_;
  bool warmed_up_ = false;
  bool initialized_ = false;
  std::uint64_t seed_counter_;
  std::vector<StructuralEvent> events_;
  std::size_t skipped_batches_ = 0;
};

}  // namespace leopard

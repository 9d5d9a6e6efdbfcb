#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "leopard/matrix.hpp"

namespace leopard {

enum class Domain { Source, Target };

std::string domain_name(Domain d);

/// Ground truth reserved for scoring. Kept as a distinct type so training
/// code cannot consume it by accident: only evaluation reads it.
struct EvalLabels {
  std::vector<int> labels;
};

/// A batch of feature vectors from one stream. `labels` is the
/// training-visible channel (entries of -1 mean "unlabelled sample"); after
/// masking only the prerecorded batch carries any non-negative entries.
struct StreamBatch {
  Matrix features;
  std::optional<std::vector<int>> labels;
  std::optional<EvalLabels> eval_labels;
  Domain domain = Domain::Source;
  std::size_t batch_index = 0;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
  std::size_t labelled_count() const;
};

struct StreamConfig {
  std::size_t n_source_batches = 40;
  std::size_t n_target_batches = 40;
  std::size_t source_batch_size = 100;
  std::size_t target_batch_size = 75;
  std::size_t n_classes = 3;
  double label_proportion = 0.10;
  std::size_t prerecorded_size = 0;  // 0 = derive as round(p * N_S)
  std::size_t source_drift_batch = 20;
  std::size_t target_drift_batch = 21;
  std::uint64_t rng_seed = 7;
  std::size_t source_dim = 4;
  std::size_t target_dim = 6;

  std::size_t derived_prerecorded_size() const;
  void validate() const;
};

/// Fixed elementwise scaling vector applied from `start_batch` onward.
struct DriftSpec {
  Vector drift_vector;
  std::size_t start_batch = 0;
};

struct SyntheticStreams {
  StreamBatch prerecorded;
  std::vector<StreamBatch> source;
  std::vector<StreamBatch> target;
  DriftSpec source_drift;
  DriftSpec target_drift;
  std::size_t zero_norm_warnings = 0;
};

/// Samples per-class latent Gaussians in a 2-D latent space and projects them
/// through two fixed random linear maps (one per stream) of different output
/// dimensionality, then injects scaling-hyperplane drift and min-max
/// normalizes each stream to [0,1]. Bit-reproducible for a given config.
SyntheticStreams generate_synthetic_streams(const StreamConfig& config);

/// x' = (d_z (.) x) / ||x||_2, computed with each sample's pre-scaling norm.
/// Zero-norm samples pass through unchanged; each one bumps *warning_count.
StreamBatch apply_scaling_hyperplane(const StreamBatch& batch, const DriftSpec& spec,
                                     std::size_t* warning_count = nullptr);

/// Enforces the scarcity protocol in place: the prerecorded batch keeps
/// exactly N_m labels, allocated per class proportionally (largest fractional
/// part wins remainders); every other batch's labels move to the
/// evaluation-only side channel.
void mask_labels(StreamBatch& prerecorded, std::vector<StreamBatch>& source_batches,
                 std::vector<StreamBatch>& target_batches, const StreamConfig& config);

struct CsvDataset {
  Matrix features;
  std::optional<std::vector<int>> labels;
  std::size_t n_classes = 0;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;
};

/// Loads a comma-separated file with a header row. Feature columns are
/// min-max normalized to [0,1] (constant columns map to zero). When
/// `label_column` names a column, its distinct values become contiguous
/// class indices in sorted order.
CsvDataset load_csv_dataset(const std::string& path,
                            const std::optional<std::string>& label_column = std::nullopt);

/// One CSV per stream with `batch_index` and `domain` appended.
void write_stream_csv(const std::string& path, const std::vector<StreamBatch>& batches);
void write_batch_csv(const std::string& path, const StreamBatch& batch);

}  // namespace leopard

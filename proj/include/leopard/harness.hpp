#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leopard/learner.hpp"
#include "leopard/network.hpp"
#include "leopard/stream.hpp"

namespace leopard {

/// Architecture knobs (the raw input dimensions come from the stream config).
struct ArchitectureConfig {
  std::size_t adapter_dim = 8;
  std::size_t extractor_width1 = 32;
  std::size_t extractor_width2 = 16;
  std::size_t initial_layer_width = 8;
  std::size_t dc_hidden_width = 16;
};

struct ExperimentConfig {
  StreamConfig stream;
  LearnerConfig learner;
  ArchitectureConfig architecture;
  std::size_t n_runs = 5;
  std::vector<std::uint64_t> seeds;  // empty = 1..n_runs
  AblationSwitches ablation;
  std::string output_dir;

  std::vector<std::uint64_t> effective_seeds() const;
  void validate() const;
};

/// Strict JSON mirror of ExperimentConfig: unknown keys abort the parse.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_to_json(const ExperimentConfig& config);

/// Named ablation rows: A = no structure evolution, no KL, no cross-domain
/// loss; B = losses only; C = structure only; full = everything.
AblationSwitches ablation_by_name(const std::string& name);

struct MetricsRecord {
  std::uint64_t run_seed = 0;
  std::size_t batch_index = 0;
  std::string stream;
  double accuracy = 0.0;
  std::size_t n_layers = 0;
  std::size_t total_nodes = 0;
  std::size_t total_clusters = 0;
  LossReport losses;
  std::vector<StructuralEvent> events;
};

/// Prequential protocol trace entry ("eval" strictly precedes "train" for
/// every batch index; the purity check asserts this).
struct ProtocolEvent {
  std::string phase;  // "eval" | "train"
  std::size_t batch_index = 0;
  std::string stream;  // for eval entries
};

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> records;
  std::vector<ProtocolEvent> protocol;
  double mean_target_accuracy = 0.0;
  double mean_source_accuracy = 0.0;
  std::size_t skipped_batches = 0;
};

struct ExperimentSummary {
  double mean_accuracy = 0.0;  // mean over runs of per-run mean target accuracy
  double std_accuracy = 0.0;
  std::vector<double> per_run_target_accuracy;
  std::vector<double> per_run_source_accuracy;
  std::vector<std::uint64_t> seeds;
};

struct ExperimentResult {
  ExperimentSummary summary;
  std::vector<RunResult> runs;
};

ExperimentResult run_experiment(const ExperimentConfig& config);
ExperimentResult run_baseline_ae_kmeans(const ExperimentConfig& config);

/// Empirical binary-probe divergence in [0,2]: trains a fresh single-hidden-
/// layer probe on a 50/50 split and scores the held-out halves.
double proxy_h_divergence(const Matrix& source_latents, const Matrix& target_latents,
                          std::uint64_t seed = 1);

struct SweepRow {
  double proportion = 0.0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
};

std::vector<SweepRow> label_proportion_sweep(const ExperimentConfig& config,
                                             const std::vector<double>& proportions);

/// Majority-class rate of the hidden labels across a stream.
double majority_class_rate(const std::vector<StreamBatch>& batches);

// ---- small helpers shared with the CLI and tests ----

struct KMeansResult {
  Matrix centroids;
  std::vector<std::size_t> assignment;
  double inertia = 0.0;
};

KMeansResult kmeans(const Matrix& points, std::size_t k, std::size_t restarts,
                    std::uint64_t seed);

std::string metrics_record_to_json(const MetricsRecord& r);
std::string summary_to_json(const ExperimentSummary& s);

void write_experiment_outputs(const ExperimentConfig& config, const ExperimentResult& result,
                              const std::string& prefix = "");

}  // namespace leopard

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "leopard/checkpoint.hpp"
#include "leopard/errors.hpp"
#include "leopard/harness.hpp"

namespace {

using namespace leopard;

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitRuntimeError = 3;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string ablation;
};

ExperimentConfig resolve_config(const CommonOptions& opts) {
  ExperimentConfig config = load_experiment_config(opts.config_path);
  if (!opts.out_dir.empty()) config.output_dir = opts.out_dir;
  if (opts.seed) {
    config.seeds = {*opts.seed};
    config.n_runs = 1;
  }
  if (!opts.ablation.empty()) config.ablation = ablation_by_name(opts.ablation);
  config.validate();
  return config;
}

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config (JSON)")->required();
  cmd->add_option("--seed", opts.seed, "run a single seed instead of the configured list");
  cmd->add_option("--out", opts.out_dir, "output directory (overrides config)");
  cmd->add_option("--ablation", opts.ablation, "A | B | C | full")
      ->check(CLI::IsMember({"A", "B", "C", "full"}));
}

void print_summary(const ExperimentSummary& s) {
  std::printf("mean target accuracy: %.4f +/- %.4f over %zu run(s)\n", s.mean_accuracy,
              s.std_accuracy, s.per_run_target_accuracy.size());
  for (std::size_t i = 0; i < s.per_run_target_accuracy.size(); ++i) {
    std::printf("  seed %llu: target %.4f  source %.4f\n",
                static_cast<unsigned long long>(s.seeds[i]), s.per_run_target_accuracy[i],
                s.per_run_source_accuracy[i]);
  }
}

int cmd_generate(const CommonOptions& opts) {
  ExperimentConfig config = resolve_config(opts);
  if (config.output_dir.empty()) {
    std::cerr << "generate: an output directory is required\n";
    return kExitConfigError;
  }
  StreamConfig sc = config.stream;
  if (opts.seed) sc.rng_seed = *opts.seed;
  SyntheticStreams streams = generate_synthetic_streams(sc);
  std::filesystem::create_directories(config.output_dir);
  write_batch_csv(config.output_dir + "/prerecorded.csv", streams.prerecorded);
  write_stream_csv(config.output_dir + "/source.csv", streams.source);
  write_stream_csv(config.output_dir + "/target.csv", streams.target);
  std::printf("wrote %zu source batches and %zu target batches to %s\n",
              streams.source.size(), streams.target.size(), config.output_dir.c_str());
  return kExitOk;
}

int cmd_run(const CommonOptions& opts) {
  ExperimentConfig config = resolve_config(opts);
  const ExperimentResult result = run_experiment(config);
  print_summary(result.summary);
  if (!config.output_dir.empty())
    std::printf("metrics written to %s\n", config.output_dir.c_str());
  return kExitOk;
}

int cmd_baseline(const CommonOptions& opts) {
  ExperimentConfig config = resolve_config(opts);
  const ExperimentResult result = run_baseline_ae_kmeans(config);
  print_summary(result.summary);
  return kExitOk;
}

int cmd_sweep(const CommonOptions& opts, const std::vector<double>& proportions) {
  ExperimentConfig config = resolve_config(opts);
  const std::vector<SweepRow> rows = label_proportion_sweep(config, proportions);
  std::printf("%-12s %-12s %-12s\n", "proportion", "mean", "std");
  for (const SweepRow& r : rows)
    std::printf("%-12.3f %-12.4f %-12.4f\n", r.proportion, r.mean_accuracy, r.std_accuracy);
  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
    std::ofstream out(config.output_dir + "/sweep.json");
    if (!out) throw IoError("cannot write sweep.json");
    out << "[\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out << "  {\"proportion\": " << rows[i].proportion
          << ", \"mean_accuracy\": " << rows[i].mean_accuracy
          << ", \"std_accuracy\": " << rows[i].std_accuracy << "}"
          << (i + 1 < rows.size() ? ",\n" : "\n");
    }
    out << "]\n";
  }
  return kExitOk;
}

int cmd_diagnose(const CommonOptions& opts, std::size_t n_batches) {
  ExperimentConfig config = resolve_config(opts);
  const std::uint64_t seed = config.effective_seeds().front();
  StreamConfig sc = config.stream;
  sc.rng_seed = seed;
  SyntheticStreams streams = generate_synthetic_streams(sc);
  mask_labels(streams.prerecorded, streams.source, streams.target, sc);

  ModelConfig mc;
  mc.source_dim = sc.source_dim;
  mc.target_dim = sc.target_dim;
  mc.adapter_dim = config.architecture.adapter_dim;
  mc.extractor_width1 = config.architecture.extractor_width1;
  mc.extractor_width2 = config.architecture.extractor_width2;
  mc.initial_layer_width = config.architecture.initial_layer_width;
  mc.dc_hidden_width = config.architecture.dc_hidden_width;
  mc.init_seed = seed;
  Learner learner(mc, config.learner, config.ablation, streams.prerecorded);
  learner.warm_up();

  auto pool_latents = [&](const std::vector<StreamBatch>& batches, Domain domain) {
    Matrix out;
    const std::size_t limit = std::min(n_batches, batches.size());
    for (std::size_t k = 0; k < limit; ++k) {
      const ExtractorCache ex =
          extractor_forward(learner.model(), batches[k].features, domain);
      for (std::size_t i = 0; i < ex.z.rows(); ++i) out.append_row(ex.z.row(i));
    }
    return out;
  };
  const double d = proxy_h_divergence(pool_latents(streams.source, Domain::Source),
                                      pool_latents(streams.target, Domain::Target), seed);
  std::printf("empirical probe divergence (natural features, first %zu batches): %.4f\n",
              n_batches, d);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"leopard: streaming cross-domain classification engine"};
  app.require_subcommand(1);

  CommonOptions generate_opts, run_opts, baseline_opts, sweep_opts, diagnose_opts;
  std::vector<double> proportions{0.05, 0.10, 0.30};
  std::size_t diagnose_batches = 5;

  CLI::App* generate = app.add_subcommand("generate", "emit synthetic stream CSVs");
  add_common(generate, generate_opts);
  CLI::App* run = app.add_subcommand("run", "run a prequential experiment");
  add_common(run, run_opts);
  CLI::App* baseline = app.add_subcommand("baseline", "run the AE+KMeans comparator");
  add_common(baseline, baseline_opts);
  CLI::App* sweep = app.add_subcommand("sweep", "label-proportion sensitivity sweep");
  add_common(sweep, sweep_opts);
  sweep->add_option("--proportions", proportions, "label proportions to sweep");
  CLI::App* diagnose = app.add_subcommand("diagnose", "empirical domain-divergence probe");
  add_common(diagnose, diagnose_opts);
  diagnose->add_option("--batches", diagnose_batches, "batches per stream to pool");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitConfigError;
  }

  try {
    if (generate->parsed()) return cmd_generate(generate_opts);
    if (run->parsed()) return cmd_run(run_opts);
    if (baseline->parsed()) return cmd_baseline(baseline_opts);
    if (sweep->parsed()) return cmd_sweep(sweep_opts, proportions);
    if (diagnose->parsed()) return cmd_diagnose(diagnose_opts, diagnose_batches);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const leopard::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitConfigError;
}

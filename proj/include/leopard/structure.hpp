#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "leopard/matrix.hpp"

namespace leopard {

/// Bias/variance bookkeeping for one layer, the signal source for node
/// growing and pruning. Expected reconstructions are tracked as exponential
/// moving averages; per-sample bias and variance feed running mean/std pairs
/// whose minima define the control limits.
struct SpcStats {
  static constexpr double kEmaDecay = 0.95;
  static constexpr std::size_t kBurnIn = 10;

  Vector ema_mean;  // E[h_hat] per dimension
  Vector ema_sq;    // E[h_hat^2] per dimension
  bool ema_initialized = false;

  std::size_t n = 0;
  double bias_mean = 0.0;
  double bias_m2 = 0.0;
  double var_mean = 0.0;
  double var_m2 = 0.0;

  double bias_mean_min = std::numeric_limits<double>::infinity();
  double bias_std_min = std::numeric_limits<double>::infinity();
  double var_mean_min = std::numeric_limits<double>::infinity();
  double var_std_min = std::numeric_limits<double>::infinity();

  double bias_std() const;
  double var_std() const;
  void reset();
};

struct ObserveResult {
  double bias = 0.0;
  double variance = 0.0;
};

/// Feeds one (input, reconstruction) pair into the layer's statistics:
/// updates the EMAs, derives the per-sample bias (E[h_hat]-h)^2 and variance
/// E[h_hat^2]-E[h_hat]^2 (both averaged over dimensions), pushes them into
/// the running pairs, and records fresh minima.
ObserveResult observe_layer(SpcStats& spc, const Vector& h_in, const Vector& h_rec);

/// Growing limit check: mu_n + sigma_n >= mu_min + k2*sigma_min with
/// k2 = 1.3*exp(-bias^2) + 0.7. Fires only after burn-in; a hit resets the
/// bias minima to the current running values.
bool should_grow_node(SpcStats& spc, double bias);

/// Pruning limit check: mu_n + sigma_n >= mu_min + 2*k3*sigma_min with
/// k3 = 1.3*exp(-variance^2) + 0.7. A hit resets the variance minima.
bool should_prune_node(SpcStats& spc, double variance);

/// Least contributing node by running mean |activation|; ties break to the
/// lowest index. Empty when the layer is at the two-node floor.
std::optional<std::size_t> prune_candidate(const Vector& contributions,
                                           std::size_t min_width = 2);

/// sqrt(ln(1/alpha) / (2*size)).
double hoeffding_epsilon(std::size_t size, double alpha);

/// Range-scaled bound for the suffix-mean test:
/// (b-a) * sqrt((size-cut) / (2*cut*size) * ln(1/alpha)).
double drift_bound(double range, std::size_t cut, std::size_t size, double alpha);

/// First candidate cut (25/50/75% of the window) whose prefix satisfies
/// P_hat + eps_P >= Q_hat + eps_Q; nullopt when none does.
std::optional<std::size_t> find_cut(const std::vector<double>& window, double alpha_x);

enum class DriftState { Stable, Warning, Drift };

std::string drift_state_name(DriftState s);

/// Two-batch Hoeffding-bound drift detector over a scalar per-sample
/// statistic. Each batch rebuilds the window from the previous and current
/// batches, searches the fixed cut candidates, and classifies the suffix
/// mean shift. A Warning confirmed by the next batch escalates to Drift.
class DriftDetector {
 public:
  DriftDetector(double alpha_x = 0.001, double alpha_d = 0.001, double alpha_w = 0.005)
      : alpha_x_(alpha_x), alpha_d_(alpha_d), alpha_w_(alpha_w) {}

  /// Classifies a prebuilt window of pooled statistics (no escalation state).
  DriftState evaluate_window(const std::vector<double>& window) const;

  /// Consumes the next batch's statistics and returns the detector state,
  /// applying the warning-confirmation rule.
  DriftState observe_batch(const std::vector<double>& batch_stats);

  /// Clears all state (used after a layer has been added).
  void reset();

  double alpha_x() const { return alpha_x_; }
  double alpha_d() const { return alpha_d_; }
  double alpha_w() const { return alpha_w_; }
  bool warning_pending() const { return warning_pending_; }
  const std::vector<double>& previous_batch() const { return previous_batch_; }
  void set_previous_batch(std::vector<double> stats, bool warning_pending);

  static constexpr std::size_t kMinWindow = 8;

 private:
  double alpha_x_;
  double alpha_d_;
  double alpha_w_;
  std::vector<double> previous_batch_;
  bool has_previous_ = false;
  bool warning_pending_ = false;
};

/// Spec'd entry point: evaluates the pooled two-batch window and applies the
/// detector's warning-escalation state.
DriftState detect_drift(DriftDetector& detector, const std::vector<double>& window);

/// One line of the structural event log.
struct StructuralEvent {
  std::size_t batch = 0;
  std::string stream;  // "source", "target", or "" when not stream-specific
  std::string event;   // grow_node | prune_node | add_layer | drift | warning
  std::size_t layer = 0;
  std::string detail;
};

}  // namespace leopard

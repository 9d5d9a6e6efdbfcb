#include "leopard/structure.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace leopard {

double SpcStats::bias_std() const {
  return n > 0 ? std::sqrt(bias_m2 / static_cast<double>(n)) : 0.0;
}

double SpcStats::var_std() const {
  return n > 0 ? std::sqrt(var_m2 / static_cast<double>(n)) : 0.0;
}

void SpcStats::reset() { *this = SpcStats{}; }

ObserveResult observe_layer(SpcStats& spc, const Vector& h_in, const Vector& h_rec) {
  if (h_in.size() != h_rec.size())
    throw std::invalid_argument("observe_layer: shape mismatch");
  const std::size_t dim = h_in.size();
  if (!spc.ema_initialized || spc.ema_mean.size() != dim) {
    spc.ema_mean = h_rec;
    spc.ema_sq.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) spc.ema_sq[d] = h_rec[d] * h_rec[d];
    spc.ema_initialized = true;
  } else {
    for (std::size_t d = 0; d < dim; ++d) {
      spc.ema_mean[d] = SpcStats::kEmaDecay * spc.ema_mean[d] +
                        (1.0 - SpcStats::kEmaDecay) * h_rec[d];
      spc.ema_sq[d] = SpcStats::kEmaDecay * spc.ema_sq[d] +
                      (1.0 - SpcStats::kEmaDecay) * h_rec[d] * h_rec[d];
    }
  }

  ObserveResult out;
  for (std::size_t d = 0; d < dim; ++d) {
    const double b = spc.ema_mean[d] - h_in[d];
    out.bias += b * b;
    out.variance += spc.ema_sq[d] - spc.ema_mean[d] * spc.ema_mean[d];
  }
  out.bias /= static_cast<double>(dim);
  out.variance /= static_cast<double>(dim);

  ++spc.n;
  const double nd = static_cast<double>(spc.n);
  double delta = out.bias - spc.bias_mean;
  spc.bias_mean += delta / nd;
  spc.bias_m2 += delta * (out.bias - spc.bias_mean);
  delta = out.variance - spc.var_mean;
  spc.var_mean += delta / nd;
  spc.var_m2 += delta * (out.variance - spc.var_mean);

  // Minima are only tracked past burn-in; the first few running values have
  // degenerate stds that would poison the control limits.
  if (spc.n >= SpcStats::kBurnIn) {
    spc.bias_mean_min = std::min(spc.bias_mean_min, spc.bias_mean);
    spc.bias_std_min = std::min(spc.bias_std_min, spc.bias_std());
    spc.var_mean_min = std::min(spc.var_mean_min, spc.var_mean);
    spc.var_std_min = std::min(spc.var_std_min, spc.var_std());
  }
  return out;
}

bool should_grow_node(SpcStats& spc, double bias) {
  if (spc.n < SpcStats::kBurnIn) return false;
  const double k2 = 1.3 * std::exp(-bias * bias) + 0.7;
  const bool fire = spc.bias_mean + spc.bias_std() >= spc.bias_mean_min + k2 * spc.bias_std_min;
  if (fire) {
    spc.bias_mean_min = spc.bias_mean;
    spc.bias_std_min = spc.bias_std();
  }
  return fire;
}

bool should_prune_node(SpcStats& spc, double variance) {
  if (spc.n < SpcStats::kBurnIn) return false;
  const double k3 = 1.3 * std::exp(-variance * variance) + 0.7;
  const bool fire = spc.var_mean + spc.var_std() >= spc.var_mean_min + 2.0 * k3 * spc.var_std_min;
  if (fire) {
    spc.var_mean_min = spc.var_mean;
    spc.var_std_min = spc.var_std();
  }
  return fire;
}

std::optional<std::size_t> prune_candidate(const Vector& contributions,
                                           std::size_t min_width) {
  if (contributions.size() <= min_width) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t i = 1; i < contributions.size(); ++i) {
    if (contributions[i] < contributions[best]) best = i;
  }
  return best;
}

double hoeffding_epsilon(std::size_t size, double alpha) {
  if (size == 0) throw std::invalid_argument("hoeffding_epsilon: size must be >= 1");
  if (alpha <= 0.0 || alpha >= 1.0)
    throw std::invalid_argument("hoeffding_epsilon: alpha must be in (0,1)");
  return std::sqrt(std::log(1.0 / alpha) / (2.0 * static_cast<double>(size)));
}

std::string drift_state_name(DriftState s) {
  switch (s) {
    case DriftState::Stable: return "stable";
    case DriftState::Warning: return "warning";
    case DriftState::Drift: return "drift";
  }
  return "stable";
}

namespace {

double mean_of(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += v[i];
  return s / static_cast<double>(end - begin);
}

}  // namespace

double drift_bound(double range, std::size_t cut, std::size_t size, double alpha) {
  if (cut == 0 || cut >= size) throw std::invalid_argument("drift_bound: bad cut");
  const double scale = std::sqrt(static_cast<double>(size - cut) /
                                 (2.0 * static_cast<double>(cut) * static_cast<double>(size)));
  return range * scale * std::sqrt(std::log(1.0 / alpha));
}

std::optional<std::size_t> find_cut(const std::vector<double>& window, double alpha_x) {
  const std::size_t size = window.size();
  const double p_hat = mean_of(window, 0, size);
  const double eps_p = hoeffding_epsilon(size, alpha_x);
  for (double frac : {0.25, 0.50, 0.75}) {
    const std::size_t cut = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(frac * static_cast<double>(size))), 1, size - 1);
    const double q_hat = mean_of(window, 0, cut);
    const double eps_q = hoeffding_epsilon(cut, alpha_x);
    if (p_hat + eps_p >= q_hat + eps_q) return cut;
  }
  return std::nullopt;
}

DriftState DriftDetector::evaluate_window(const std::vector<double>& window) const {
  const std::size_t size = window.size();
  if (size < kMinWindow) return DriftState::Stable;

  double lo = window[0], hi = window[0];
  for (double v : window) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double range = hi - lo;
  if (range <= 0.0) return DriftState::Stable;

  const std::optional<std::size_t> cut = find_cut(window, alpha_x_);
  if (!cut) return DriftState::Stable;

  const double q_hat = mean_of(window, 0, *cut);
  const double r_hat = mean_of(window, *cut, size);
  const double shift = std::abs(r_hat - q_hat);
  if (shift >= drift_bound(range, *cut, size, alpha_d_)) return DriftState::Drift;
  if (shift >= drift_bound(range, *cut, size, alpha_w_)) return DriftState::Warning;
  return DriftState::Stable;
}

DriftState detect_drift(DriftDetector& detector, const std::vector<double>& window) {
  DriftState state = detector.evaluate_window(window);
  if (detector.warning_pending() && state != DriftState::Stable) state = DriftState::Drift;
  return state;
}

DriftState DriftDetector::observe_batch(const std::vector<double>& batch_stats) {
  if (!has_previous_) {
    previous_batch_ = batch_stats;
    has_previous_ = true;
    warning_pending_ = false;
    return DriftState::Stable;
  }
  std::vector<double> window = previous_batch_;
  window.insert(window.end(), batch_stats.begin(), batch_stats.end());
  const DriftState state = detect_drift(*this, window);
  warning_pending_ = (state == DriftState::Warning);
  previous_batch_ = batch_stats;
  return state;
}

void DriftDetector::reset() {
  previous_batch_.clear();
  has_previous_ = false;
  warning_pending_ = false;
}

void DriftDetector::set_previous_batch(std::vector<double> stats, bool warning_pending) {
  previous_batch_ = std::move(stats);
  has_previous_ = !previous_batch_.empty();
  warning_pending_ = warning_pending;
}

}  // namespace leopard

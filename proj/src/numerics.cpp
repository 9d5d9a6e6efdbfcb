#include "leopard/numerics.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "leopard/errors.hpp"

namespace leopard {

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Matrix xavier_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t rng_seed) {
  if (fan_in == 0 || fan_out == 0)
    throw std::invalid_argument("xavier_init: fan dimensions must be >= 1");
  const double bound = xavier_bound(fan_in, fan_out);
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(fan_out, fan_in);
  for (double& x : m.data()) x = dist(rng);
  return m;
}

Matrix& sgd_momentum_step(Matrix& param, const Matrix& grad, OptimizerState& state) {
  if (!param.same_shape(grad) || !param.same_shape(state.velocity))
    throw std::invalid_argument("sgd_momentum_step: shape mismatch");
  Vector& v = state.velocity.data();
  Vector& w = param.data();
  const Vector& g = grad.data();
  for (std::size_t i = 0; i < w.size(); ++i) {
    v[i] = state.momentum * v[i] + g[i];
    w[i] -= state.learning_rate * v[i];
  }
  return param;
}

void sgd_momentum_step(Param& param, const Matrix& grad, double learning_rate,
                       double momentum) {
  OptimizerState state{std::move(param.velocity), learning_rate, momentum};
  sgd_momentum_step(param.value, grad, state);
  param.velocity = std::move(state.velocity);
}

Matrix finite_diff_gradient(const std::function<double(const Matrix&)>& loss_fn,
                            const Matrix& params, double step) {
  if (step <= 0.0) throw std::invalid_argument("finite_diff_gradient: step must be > 0");
  Matrix probe = params;
  Matrix grad(params.rows(), params.cols(), 0.0);
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe.data()[i];
    probe.data()[i] = saved + step;
    const double up = loss_fn(probe);
    probe.data()[i] = saved - step;
    const double down = loss_fn(probe);
    probe.data()[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_diff_gradient: non-finite loss at probe point");
    grad.data()[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double relative_error(double analytic, double reference, double abs_floor) {
  const double denom = std::max(std::abs(reference), abs_floor);
  return std::abs(analytic - reference) / denom;
}

}  // namespace leopard

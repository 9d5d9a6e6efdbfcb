#pragma once

#include <cstdint>
#include <functional>

#include "leopard/matrix.hpp"

namespace leopard {

/// Heavy-ball momentum state for one parameter tensor. The velocity always
/// mirrors the parameter's shape; learning rate and momentum stay fixed for
/// the lifetime of a run.
struct OptimizerState {
  Matrix velocity;
  double learning_rate = 0.01;
  double momentum = 0.95;
};

/// A parameter tensor together with its momentum buffer. Structural mutations
/// must keep the two in lockstep.
struct Param {
  Matrix value;
  Matrix velocity;

  Param() = default;
  explicit Param(Matrix v) : value(std::move(v)) {
    velocity = Matrix(value.rows(), value.cols(), 0.0);
  }
};

/// Uniform Xavier/Glorot initialization: entries drawn from
/// [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))], shape fan_out x fan_in.
Matrix xavier_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t rng_seed);

double xavier_bound(std::size_t fan_in, std::size_t fan_out);

/// One heavy-ball step: v <- momentum*v + grad; param <- param - lr*v.
/// Returns the updated parameter (also mutated in place).
Matrix& sgd_momentum_step(Matrix& param, const Matrix& grad, OptimizerState& state);

void sgd_momentum_step(Param& param, const Matrix& grad, double learning_rate,
                       double momentum);

/// Central-difference gradient oracle: (f(w+h) - f(w-h)) / (2h) per coordinate.
/// Used by the test suites to validate every hand-derived backward pass.
Matrix finite_diff_gradient(const std::function<double(const Matrix&)>& loss_fn,
                            const Matrix& params, double step);

/// Relative error with an absolute floor, the yardstick for gradient checks.
double relative_error(double analytic, double reference, double abs_floor = 1e-6);

constexpr double kFiniteDiffStep = 1e-4;
constexpr double kGradCheckTolerance = 1e-4;

}  // namespace leopard

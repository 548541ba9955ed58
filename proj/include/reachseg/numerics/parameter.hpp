#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "reachseg/numerics/matrix.hpp"

namespace reachseg {

/// Every stochastic component draws from this generator type.
using Rng = std::mt19937_64;

/// A learnable tensor and its accumulated gradient.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix value)
      : name(std::move(name)), value(std::move(value)) {
    grad = Matrix(this->value.rows(), this->value.cols());
  }

  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.set_zero(); }
};

/// Entries i.i.d. uniform on ±sqrt(6 / (rows + cols)).
Matrix glorot_uniform_init(std::size_t rows, std::size_t cols, Rng& rng);

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamState() = default;
  AdamState(const Parameter& param, AdamConfig config);

  Matrix first_moment;
  Matrix second_moment;
  std::int64_t step_count = 0;
  AdamConfig config;
};

/// One bias-corrected Adam update; the gradient is zeroed afterwards.
/// Throws NumericError when the gradient contains NaN/Inf.
void adam_step(Parameter& param, AdamState& state);

/// Adam over a fixed group of parameters owned elsewhere.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(std::vector<Parameter*> params, AdamConfig config);

  void step();
  void zero_grad();
  const std::vector<Parameter*>& parameters() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<AdamState> states_;
};

}  // namespace reachseg

#include "reachseg/numerics/parameter.hpp"

#include <cmath>
#include <stdexcept>

#include "reachseg/errors.hpp"

namespace reachseg {

Matrix glorot_uniform_init(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0) {
    throw std::invalid_argument("glorot_uniform_init: dimensions must be >= 1");
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix out(rows, cols);
  for (double& v : out.values()) v = dist(rng);
  return out;
}

AdamState::AdamState(const Parameter& param, AdamConfig config)
    : first_moment(param.value.rows(), param.value.cols()),
      second_moment(param.value.rows(), param.value.cols()),
      config(config) {
  if (!(config.beta1 > 0.0 && config.beta1 < 1.0 && config.beta2 > 0.0 && config.beta2 < 1.0)) {
    throw std::invalid_argument("AdamState: betas must lie in (0, 1)");
  }
  if (!(config.learning_rate > 0.0)) {
    throw std::invalid_argument("AdamState: learning rate must be positive");
  }
}

void adam_step(Parameter& param, AdamState& state) {
  require_same_shape(param.value, param.grad, "adam_step");
  require_same_shape(param.value, state.first_moment, "adam_step");
  if (!param.grad.all_finite()) {
    throw NumericError("adam_step: non-finite gradient for parameter '" + param.name + "'");
  }
  const AdamConfig& c = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  auto m = state.first_moment.values();
  auto v = state.second_moment.values();
  auto g = param.grad.values();
  auto x = param.value.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    x[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
  param.zero_grad();
}

AdamOptimizer::AdamOptimizer(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)) {
  states_.reserve(params_.size());
  for (Parameter* p : params_) states_.emplace_back(*p, config);
}

void AdamOptimizer::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) adam_step(*params_[i], states_[i]);
}

void AdamOptimizer::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace reachseg

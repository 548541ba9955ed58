#pragma once

#include <string>
#include <vector>

#include "reachseg/numerics/layers.hpp"

namespace reachseg {

/// Fully connected stack: affine → ReLU → dropout per hidden layer, then a
/// linear output layer. Output activations belong to the owning head.
class Mlp {
 public:
  struct Tape {
    std::vector<Matrix> inputs;       // input of each affine layer
    std::vector<Matrix> activations;  // pre-ReLU value of each hidden layer
    std::vector<Matrix> masks;        // dropout mask of each hidden layer
  };

  Mlp() = default;
  Mlp(const std::string& name, std::size_t input_dim, const std::vector<std::size_t>& hidden,
      std::size_t output_dim, double dropout, Rng& rng);

  /// Returns output logits. `tape` may be null when no backward pass follows.
  Matrix forward(const Matrix& x, bool training, Rng& rng, Tape* tape) const;
  Matrix forward(const Matrix& x) const;
  /// Gradient w.r.t. the input; accumulates parameter gradients.
  Matrix backward(const Tape& tape, const Matrix& d_logits);

  std::size_t input_dim() const { return weights_.front().value.rows(); }
  std::size_t output_dim() const { return weights_.back().value.cols(); }
  double dropout() const { return dropout_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
  double dropout_ = 0.0;
};

}  // namespace reachseg

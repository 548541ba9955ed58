#include "reachseg/networks/mlp.hpp"

#include <stdexcept>

namespace reachseg {

Mlp::Mlp(const std::string& name, std::size_t input_dim, const std::vector<std::size_t>& hidden,
         std::size_t output_dim, double dropout, Rng& rng)
    : dropout_(dropout) {
  std::size_t fan_in = input_dim;
  std::vector<std::size_t> widths = hidden;
  widths.push_back(output_dim);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const std::string layer = name + ".layer" + std::to_string(l);
    weights_.emplace_back(layer + ".weight", glorot_uniform_init(fan_in, widths[l], rng));
    biases_.emplace_back(layer + ".bias", Matrix(1, widths[l]));
    fan_in = widths[l];
  }
}

Matrix Mlp::forward(const Matrix& x, bool training, Rng& rng, Tape* tape) const {
  if (x.cols() != input_dim()) {
    throw std::invalid_argument("Mlp: input width " + std::to_string(x.cols()) +
                                " != expected " + std::to_string(input_dim()));
  }
  if (tape) *tape = Tape{};
  Matrix h = x;
  const std::size_t layers = weights_.size();
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    Matrix pre = affine_forward(h, weights_[l], biases_[l]);
    DropoutResult dropped = dropout_forward(relu_forward(pre), dropout_, training, rng);
    if (tape) {
      tape->inputs.push_back(std::move(h));
      tape->activations.push_back(std::move(pre));
      tape->masks.push_back(std::move(dropped.mask));
    }
    h = std::move(dropped.output);
  }
  Matrix out = affine_forward(h, weights_.back(), biases_.back());
  if (tape) tape->inputs.push_back(std::move(h));
  return out;
}

Matrix Mlp::forward(const Matrix& x) const {
  Rng unused(0);
  return forward(x, false, unused, nullptr);
}

Matrix Mlp::backward(const Tape& tape, const Matrix& d_logits) {
  if (tape.inputs.size() != weights_.size()) {
    throw std::invalid_argument("Mlp::backward: tape does not match network depth");
  }
  Matrix d = d_logits;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    d = affine_backward(tape.inputs[l], d, weights_[l], biases_[l]);
    if (l > 0) {
      d = relu_backward(tape.activations[l - 1], dropout_backward(tape.masks[l - 1], d));
    }
  }
  return d;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

}  // namespace reachseg

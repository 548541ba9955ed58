#include "reachseg/networks/heads.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace reachseg {

Head::Head(const std::string& name, std::size_t input_dim, const std::vector<std::size_t>& hidden,
           std::size_t output_dim, double dropout, OutputActivation activation, Rng& rng,
           std::vector<std::size_t> blocks)
    : mlp_(name, input_dim, hidden, output_dim, dropout, rng),
      activation_(activation),
      blocks_(std::move(blocks)) {
  if (activation_ == OutputActivation::kBlockSoftmax &&
      std::accumulate(blocks_.begin(), blocks_.end(), std::size_t{0}) != output_dim) {
    throw std::invalid_argument("Head: output blocks must sum to the output width");
  }
}

Matrix Head::forward(const Matrix& x, bool training, Rng& rng, Tape* tape) const {
  Matrix logits = mlp_.forward(x, training, rng, tape ? &tape->mlp : nullptr);
  Matrix out;
  switch (activation_) {
    case OutputActivation::kSigmoid: out = sigmoid_forward(logits); break;
    case OutputActivation::kSoftmax: out = softmax_rows(logits); break;
    case OutputActivation::kBlockSoftmax: out = softmax_blocks(logits, blocks_); break;
  }
  if (tape) tape->output = out;
  return out;
}

Matrix Head::forward(const Matrix& x) const {
  Rng unused(0);
  return forward(x, false, unused, nullptr);
}

Matrix Head::backward(const Tape& tape, const Matrix& d_output) {
  Matrix d_logits;
  switch (activation_) {
    case OutputActivation::kSigmoid: d_logits = sigmoid_backward(tape.output, d_output); break;
    case OutputActivation::kSoftmax: d_logits = softmax_rows_backward(tape.output, d_output); break;
    case OutputActivation::kBlockSoftmax:
      d_logits = softmax_blocks_backward(tape.output, blocks_, d_output);
      break;
  }
  return mlp_.backward(tape.mlp, d_logits);
}

Head make_predictor(std::size_t hidden_dim, double dropout, Rng& rng) {
  return Head("predictor", hidden_dim, {50, 50}, 1, dropout, OutputActivation::kSigmoid, rng);
}

Head make_selector(std::size_t hidden_dim, std::size_t clusters, double dropout, Rng& rng) {
  if (clusters == 0) throw std::invalid_argument("make_selector: K must be >= 1");
  return Head("selector", hidden_dim, {50}, clusters, dropout, OutputActivation::kSoftmax, rng);
}

Head make_beh2stat(std::size_t hidden_dim, std::span<const std::size_t> class_counts,
                   std::size_t width, std::size_t depth, Rng& rng) {
  const std::vector<std::size_t> blocks(class_counts.begin(), class_counts.end());
  const std::size_t total = std::accumulate(blocks.begin(), blocks.end(), std::size_t{0});
  return Head("beh2stat", hidden_dim, std::vector<std::size_t>(depth, width), total, 0.0,
              OutputActivation::kBlockSoftmax, rng, blocks);
}

Head make_medium_assigner(std::size_t input_dim, std::size_t width, std::size_t media, Rng& rng) {
  if (media == 0) throw std::invalid_argument("make_medium_assigner: need >= 1 medium");
  return Head("assigner", input_dim, {width}, media, 0.0, OutputActivation::kSoftmax, rng);
}

Matrix EmbeddingDictionary::centroid(std::size_t k) const {
  if (k >= size()) throw std::out_of_range("EmbeddingDictionary: cluster index out of range");
  return Matrix::row_vector(centroids.value.row(k));
}

std::size_t sample_cluster(std::span<const double> probabilities, Rng& rng) {
  if (probabilities.empty()) throw std::invalid_argument("sample_cluster: empty distribution");
  double total = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0)) throw std::invalid_argument("sample_cluster: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("sample_cluster: probabilities sum to " + std::to_string(total));
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng) * total;
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < probabilities.size(); ++k) {
    if (probabilities[k] > 0.0) last_positive = k;
    cumulative += probabilities[k];
    if (u < cumulative) return k;
  }
  return last_positive;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace reachseg

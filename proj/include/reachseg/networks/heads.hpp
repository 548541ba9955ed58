#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "reachseg/networks/mlp.hpp"

namespace reachseg {

enum class OutputActivation { kSigmoid, kSoftmax, kBlockSoftmax };

/// An MLP with a probabilistic output layer. Used for the predictor (sigmoid),
/// the selector and medium assigner (softmax) and Beh2Stat (one softmax per
/// static feature).
class Head {
 public:
  struct Tape {
    Mlp::Tape mlp;
    Matrix output;
  };

  Head() = default;
  Head(const std::string& name, std::size_t input_dim, const std::vector<std::size_t>& hidden,
       std::size_t output_dim, double dropout, OutputActivation activation, Rng& rng,
       std::vector<std::size_t> blocks = {});

  Matrix forward(const Matrix& x, bool training, Rng& rng, Tape* tape) const;
  /// Evaluation mode: dropout off, no tape.
  Matrix forward(const Matrix& x) const;
  /// Takes the gradient w.r.t. the output probabilities, returns it w.r.t. the input.
  Matrix backward(const Tape& tape, const Matrix& d_output);

  std::size_t input_dim() const { return mlp_.input_dim(); }
  std::size_t output_dim() const { return mlp_.output_dim(); }
  const std::vector<std::size_t>& blocks() const { return blocks_; }

  std::vector<Parameter*> parameters() { return mlp_.parameters(); }
  std::vector<const Parameter*> parameters() const { return mlp_.parameters(); }

 private:
  Mlp mlp_;
  OutputActivation activation_ = OutputActivation::kSoftmax;
  std::vector<std::size_t> blocks_;
};

/// g_φ: H → 50 → 50 → 1, ReLU + dropout hidden, sigmoid output.
Head make_predictor(std::size_t hidden_dim, double dropout, Rng& rng);
/// h_ψ: H → 50 → K, ReLU + dropout hidden, softmax output.
Head make_selector(std::size_t hidden_dim, std::size_t clusters, double dropout, Rng& rng);
/// b_ω: H → width×depth → one softmax head per static feature.
Head make_beh2stat(std::size_t hidden_dim, std::span<const std::size_t> class_counts,
                   std::size_t width, std::size_t depth, Rng& rng);
/// v_δ: concatenated Beh2Stat distributions → width → softmax over media.
Head make_medium_assigner(std::size_t input_dim, std::size_t width, std::size_t media, Rng& rng);

/// The K×H embedding dictionary of cluster centroids.
struct EmbeddingDictionary {
  EmbeddingDictionary() = default;
  EmbeddingDictionary(std::size_t clusters, std::size_t hidden_dim)
      : centroids("dictionary.centroids", Matrix(clusters, hidden_dim)) {}

  std::size_t size() const { return centroids.value.rows(); }
  /// e(k) as a 1×H row.
  Matrix centroid(std::size_t k) const;

  Parameter centroids;
};

/// Inverse-CDF draw from a categorical distribution. Throws invalid_argument
/// when the probabilities are negative or do not sum to 1 within 1e−9.
std::size_t sample_cluster(std::span<const double> probabilities, Rng& rng);

/// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace reachseg

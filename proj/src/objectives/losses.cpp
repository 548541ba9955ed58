#include "reachseg/objectives/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "reachseg/numerics/layers.hpp"

namespace reachseg {

namespace {

std::size_t checked_user_count(std::span<const std::size_t> offsets, std::size_t rows,
                               const char* context) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != rows) {
    throw std::invalid_argument(std::string(context) + ": offsets do not cover the batch");
  }
  return offsets.size() - 1;
}

}  // namespace

LossWithGrad loss_pretrain(const Matrix& predictions, std::span<const int> labels,
                           std::span<const std::size_t> offsets) {
  if (predictions.cols() != 1 || predictions.rows() != labels.size()) {
    throw std::invalid_argument("loss_pretrain: " + std::to_string(labels.size()) +
                                " labels for predictions " + predictions.shape_string());
  }
  const double users = static_cast<double>(
      checked_user_count(offsets, predictions.rows(), "loss_pretrain"));
  LossWithGrad out{0.0, Matrix(predictions.rows(), 1)};
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const BceTerms t = binary_cross_entropy(labels[r], predictions[r]);
    out.value += t.value;
    out.grad[r] = t.d_prediction / users;
  }
  out.value /= users;
  return out;
}

LossWithGrad loss_entropy(const Matrix& pi, std::span<const std::size_t> offsets) {
  const double users = static_cast<double>(checked_user_count(offsets, pi.rows(), "loss_entropy"));
  LossWithGrad out{0.0, Matrix(pi.rows(), pi.cols())};
  for (std::size_t i = 0; i < pi.size(); ++i) {
    const double p = pi[i];
    if (p > 0.0) out.value -= p * std::log(p);
    out.grad[i] = -(std::log(std::max(p, kProbabilityFloor)) + 1.0) / users;
  }
  out.value /= users;
  return out;
}

CentroidPredictionLoss loss_centroid_prediction(std::span<const int> labels,
                                                std::span<const std::size_t> clusters,
                                                std::span<const double> centroid_predictions,
                                                const Matrix& pi,
                                                std::span<const std::size_t> offsets) {
  const std::size_t rows = labels.size();
  if (clusters.size() != rows || pi.rows() != rows ||
      pi.cols() != centroid_predictions.size()) {
    throw std::invalid_argument("loss_centroid_prediction: inconsistent batch shapes");
  }
  const double users =
      static_cast<double>(checked_user_count(offsets, rows, "loss_centroid_prediction"));
  CentroidPredictionLoss out;
  out.row_losses.resize(rows);
  out.d_centroid_predictions.assign(centroid_predictions.size(), 0.0);
  out.d_pi = Matrix(rows, pi.cols());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t c = clusters[r];
    if (c >= centroid_predictions.size()) {
      throw std::invalid_argument("loss_centroid_prediction: cluster index out of range");
    }
    const BceTerms t = binary_cross_entropy(labels[r], centroid_predictions[c]);
    out.row_losses[r] = t.value;
    out.value += t.value;
    out.d_centroid_predictions[c] += t.d_prediction / users;
    out.d_pi(r, c) = t.value / (std::max(pi(r, c), kProbabilityFloor) * users);
  }
  out.value /= users;
  return out;
}

SeparationLoss loss_separation(std::span<const double> centroid_predictions) {
  const std::size_t k = centroid_predictions.size();
  SeparationLoss out;
  out.grad.assign(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      const BceTerms t = binary_cross_entropy(centroid_predictions[a], centroid_predictions[b]);
      out.value -= t.value;
      out.grad[a] -= t.d_label;
      out.grad[b] -= t.d_prediction;
    }
  }
  return out;
}

LossWithGrad loss_beh2stat(const Matrix& probabilities,
                           const std::vector<std::vector<std::size_t>>& classes,
                           std::span<const std::size_t> class_counts) {
  const std::size_t total =
      std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0});
  if (probabilities.cols() != total || probabilities.rows() != classes.size()) {
    throw std::invalid_argument("loss_beh2stat: heads " + probabilities.shape_string() +
                                " do not match the schema or label count");
  }
  if (classes.empty()) throw std::invalid_argument("loss_beh2stat: empty batch");
  const double rows = static_cast<double>(classes.size());
  LossWithGrad out{0.0, Matrix(probabilities.rows(), probabilities.cols())};
  for (std::size_t r = 0; r < classes.size(); ++r) {
    if (classes[r].size() != class_counts.size()) {
      throw std::invalid_argument("loss_beh2stat: label tuple has wrong feature count");
    }
    std::size_t offset = 0;
    for (std::size_t f = 0; f < class_counts.size(); ++f) {
      if (classes[r][f] >= class_counts[f]) {
        throw std::invalid_argument("loss_beh2stat: class index out of range");
      }
      const std::size_t col = offset + classes[r][f];
      const double p = probabilities(r, col);
      const double clamped = std::max(p, kProbabilityFloor);
      out.value -= std::log(clamped);
      if (p >= kProbabilityFloor) out.grad(r, col) = -1.0 / (clamped * rows);
      offset += class_counts[f];
    }
  }
  out.value /= rows;
  return out;
}

JointLoss loss_joint(double l1, double l2, double reach_term, const LossWeights& weights) {
  if (weights.alpha < 0.0 || weights.beta < 0.0) {
    throw std::invalid_argument("loss_joint: α and β must be non-negative");
  }
  return {l1 + weights.alpha * l2, l1, reach_term};
}

}  // namespace reachseg

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "reachseg/numerics/matrix.hpp"

// Discovery losses. Batches are laid out one row per (user, t) prefix, with
// `offsets` (size users+1, see prefix_offsets()) marking user boundaries.
// Per-user sums are averaged over users.

namespace reachseg {

struct LossWithGrad {
  double value = 0.0;
  /// Gradient w.r.t. the primary input, same layout as that input.
  Matrix grad;
};

/// ℒ₁ pre-training loss: mean over users of Σₜ BCE(y_t, ŷ_t).
/// `predictions` is rows×1.
LossWithGrad loss_pretrain(const Matrix& predictions, std::span<const int> labels,
                           std::span<const std::size_t> offsets);

/// ℒ₂: mean over users of Σₜ Shannon entropy of π_t (natural log, 0·log 0 = 0).
/// The gradient entry for a zero probability uses the probability floor.
LossWithGrad loss_entropy(const Matrix& pi, std::span<const std::size_t> offsets);

struct CentroidPredictionLoss {
  double value = 0.0;
  std::vector<double> row_losses;             // l₁(y_t, ȳ_t) per row
  std::vector<double> d_centroid_predictions;  // ∂/∂ g_φ(e(k)), length K
  Matrix d_pi;                                 // score-function term l₁·∇log π(c)
};

/// ℒ₁ of the actor-critic stage: ȳ_t = g_φ(e(c_t)) for the drawn cluster c_t.
/// `centroid_predictions` holds g_φ(e(k)) for every k.
CentroidPredictionLoss loss_centroid_prediction(std::span<const int> labels,
                                                std::span<const std::size_t> clusters,
                                                std::span<const double> centroid_predictions,
                                                const Matrix& pi,
                                                std::span<const std::size_t> offsets);

/// ℒ₃ = −Σ_{k≠k′} H(g_φ(e(k)), g_φ(e(k′))) with the first argument as soft label.
/// Gradient is w.r.t. the K centroid predictions.
struct SeparationLoss {
  double value = 0.0;
  std::vector<double> grad;
};
SeparationLoss loss_separation(std::span<const double> centroid_predictions);

/// ℒ_B: mean over rows of Σ_features −log p_f(S_f). `probabilities` holds the
/// concatenated per-feature heads; `classes` is rows×features of true indices.
LossWithGrad loss_beh2stat(const Matrix& probabilities,
                           const std::vector<std::vector<std::size_t>>& classes,
                           std::span<const std::size_t> class_counts);

struct LossWeights {
  double alpha = 0.1;
  double beta = 0.1;
};

/// ℒ₄ = ℒ_A + ℒ_C + ℒ_R with ℒ_A = ℒ₁ + αℒ₂ and ℒ_C = ℒ₁.
struct JointLoss {
  double actor = 0.0;
  double critic = 0.0;
  double reach = 0.0;
  double total() const { return actor + critic + reach; }
};
JointLoss loss_joint(double l1, double l2, double reach_term, const LossWeights& weights);

}  // namespace reachseg

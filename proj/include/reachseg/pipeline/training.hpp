#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "reachseg/networks/model.hpp"
#include "reachseg/objectives/delivery.hpp"
#include "reachseg/objectives/losses.hpp"
#include "reachseg/pipeline/trace.hpp"
#include "reachseg/synthdata/dataset.hpp"
#include "reachseg/synthdata/media_table.hpp"

namespace reachseg {

struct TrainConfig {
  std::size_t clusters = 5;
  std::size_t batch_size = 128;
  double learning_rate = 0.001;
  double beh2stat_learning_rate = 0.005;
  std::size_t pretrain_iterations = 1000;
  std::size_t selector_iterations = 5000;
  std::size_t actor_critic_iterations = 1000;
  std::size_t beh2stat_iterations = 1000;
  std::size_t joint_iterations = 2000;
  std::size_t min_epochs = 100;
  std::size_t lookback = 15;
  LossWeights weights;
  Formulation formulation = Formulation::kAlm;
  bool paper_literal_barrier = false;
  /// Floor for the slack/barrier weight w so 1/w stays finite over long runs.
  double min_dual_weight = 1e-12;
  double validation_fraction = 0.1;
  std::size_t kmeans_max_iterations = 100;
  double kmeans_tolerance = 1e-6;
  double divergence_factor = 10.0;
  std::size_t divergence_window = 50;
  /// Keep the Beh2Stat parameters with the lowest validation ℒ_B.
  bool beh2stat_select_best = true;
  bool ablate_step2 = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Training users split into a fitting part and a seed-deterministic validation part.
struct DataSplit {
  UserBatch train;
  UserBatch validation;
};
DataSplit split_validation(std::span<const UserRecord> users, double fraction, std::uint64_t seed);

/// Embeddings of every (user, t) prefix of a group of users, with labels.
struct EncodedUsers {
  Matrix z;
  std::vector<std::size_t> offsets;  // size users+1
  std::vector<int> labels;
  std::size_t users() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};
EncodedUsers encode_users(const HanEncoder& encoder, const UserBatch& users);
/// Rows of the selected users, in the given order.
EncodedUsers gather_users(const EncodedUsers& all, std::span<const std::size_t> user_indices);

/// Hands out user indices in shuffled mini-batches, reshuffling every epoch.
class UserBatcher {
 public:
  UserBatcher(std::size_t users, std::size_t batch_size, Rng& rng);
  std::vector<std::size_t> next();
  /// Completed passes over the data.
  std::size_t epochs() const { return epochs_; }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t cursor_ = 0;
  std::size_t epochs_ = 0;
  Rng* rng_;
};

struct StageResult {
  std::size_t iterations = 0;
  std::size_t epochs = 0;
  bool stopped_early = false;
  /// Iteration whose parameters were kept (1-based; 0 when nothing ran).
  std::size_t selected_iteration = 0;
};

/// Stage 1a: minimize the pre-training ℒ₁ over θ and φ for a fixed number of iterations.
StageResult pretrain_encoder_predictor(SegmentationModel& model, const DataSplit& data,
                                       const TrainConfig& config, ConvergenceTrace& trace);

struct KMeansResult {
  Matrix centroids;                  // K×H
  std::vector<std::size_t> labels;   // one per point
  std::size_t iterations = 0;
};
/// K-Means++ seeding then Lloyd iterations until the largest centroid shift
/// is below `tolerance` or `max_iterations` is reached. Throws InvalidState
/// when there are fewer than K distinct points.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iterations = 100, double tolerance = 1e-6);

/// Stage 1b: K-Means over every training prefix embedding; the centroids
/// become the embedding dictionary.
KMeansResult init_clusters(SegmentationModel& model, const Matrix& embeddings,
                           const TrainConfig& config);

/// Stage 1c: fit the selector to the K-Means labels by cross-entropy.
StageResult pretrain_selector(SegmentationModel& model, const Matrix& embeddings,
                              std::span<const std::size_t> labels, const TrainConfig& config,
                              ConvergenceTrace& trace);

/// Runs 1a–1c.
void run_pretraining(SegmentationModel& model, const DataSplit& data, const TrainConfig& config,
                     ConvergenceTrace& trace);

/// Stage 2: actor (θ, ψ), critic (φ) and dictionary (ℰ) updates with early stopping.
StageResult train_actor_critic(SegmentationModel& model, const DataSplit& data,
                               const TrainConfig& config, ConvergenceTrace& trace);

/// Beh2Stat on (z_t, S) pairs with the encoder frozen. With
/// beh2stat_select_best the parameters of the best validation iteration are kept.
StageResult train_beh2stat(SegmentationModel& model, const DataSplit& data,
                           const TrainConfig& config, ConvergenceTrace& trace);

/// Final delivery plan: one medium (or none) per segment.
struct DeliveryPlan {
  std::vector<SegmentDelivery> segments;         // A one-hot on the chosen medium
  std::vector<std::optional<std::size_t>> media;  // nullopt when a segment is not delivered
  double reach = 0.0;
  double spend = 0.0;
  double slack = 0.0;
  double budget = 0.0;
};

/// Hard plan from soft segments: j′ = argmaxⱼ Aᵢⱼ ρ̄ᵢⱼ η̄ᵢⱼ, A made one-hot.
DeliveryPlan harden_plan(std::span<const SegmentDelivery> segments, const MediaEconomics& econ);
/// Reach/spend of segments with explicit media choices (nullopt = excluded).
DeliveryPlan plan_with_media(std::span<const SegmentDelivery> segments,
                             std::span<const std::optional<std::size_t>> media,
                             const MediaEconomics& econ);

/// Per-segment quantities derived from the dictionary: Beh2Stat distributions
/// of each centroid, expected rates and the assigner's soft medium row.
struct SegmentProfile {
  Matrix static_distributions;             // K×Σclasses
  std::vector<std::vector<MediaRate>> rates;
  Matrix assignment;                       // K×M
};
SegmentProfile profile_segments(const SegmentationModel& model, const MediaTable& table);

/// argmax π per row in evaluation mode.
std::vector<std::size_t> hard_clusters(const SegmentationModel& model, const Matrix& embeddings);
std::vector<double> cluster_counts(std::span<const std::size_t> clusters, std::size_t k);

/// Segments with hard counts over the given embeddings.
std::vector<SegmentDelivery> hard_segments(const SegmentationModel& model,
                                           const SegmentProfile& profile,
                                           const Matrix& embeddings);

struct JointResult {
  StageResult stage;
  DeliveryPlan plan;
  DualState dual;
};

/// Stage 3: joint discovery and delivery. Requires stages 1 and 2 (stage 2
/// may be skipped with config.ablate_step2) and a trained Beh2Stat.
JointResult train_joint(SegmentationModel& model, const DataSplit& data, const MediaTable& table,
                        const MediaEconomics& econ, const TrainConfig& config,
                        ConvergenceTrace& trace);

/// Number of (user, t) prefixes of a group of users.
std::size_t prefix_count(std::span<const UserRecord> users);

}  // namespace reachseg

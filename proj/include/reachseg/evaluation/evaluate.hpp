#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "reachseg/pipeline/training.hpp"

namespace reachseg {

/// Each segment goes to argmaxⱼ ρ̄ᵢⱼη̄ᵢⱼ regardless of cost.
DeliveryPlan baseline_disc_uc(std::span<const SegmentDelivery> segments,
                              const MediaEconomics& econ);

enum class GreedyOrder {
  kBestReach,     // segments by descending maxⱼ ρ̄ᵢⱼη̄ᵢⱼnᵢ, media by descending ρ̄η̄
  kReachPerCost,  // segments by descending maxⱼ ρ̄ᵢⱼη̄ᵢⱼ/χⱼ, media by descending ρ̄η̄/χ
};

/// Greedy budget-constrained delivery: for each segment in order, take the
/// first medium whose spend fits in the remaining budget, else skip it.
DeliveryPlan baseline_disc_bc(std::span<const SegmentDelivery> segments,
                              const MediaEconomics& econ,
                              GreedyOrder order = GreedyOrder::kBestReach);

/// ȳ_t = g_φ(e(argmax π_t)) for every row.
std::vector<double> centroid_scores(const SegmentationModel& model, const Matrix& embeddings);

/// AUROC of the centroid predictions against y_t, over every (user, t) or
/// only each user's final session.
double auroc_ybar(const SegmentationModel& model, const EncodedUsers& users,
                  bool final_session_only = false);

struct FeatureAccuracy {
  std::string feature;
  std::size_t classes = 0;
  double accuracy = 0.0;
  double random_baseline = 0.0;
};
/// Per-feature argmax accuracy of Beh2Stat on each user's final prefix.
std::vector<FeatureAccuracy> beh2stat_accuracy(const SegmentationModel& model,
                                               const StaticSchema& schema,
                                               const UserBatch& users);

struct SegmentReportRow {
  std::size_t segment = 0;
  double proportion = 0.0;
  std::vector<int> static_tuple;  // argmax class per feature
  std::size_t tuple_index = 0;
  std::optional<std::size_t> medium;
  double match = 0.0;     // ρ̄ on the assigned medium (0 when not delivered)
  double exposure = 0.0;  // η̄ on the assigned medium
};
/// One row per segment; proportions are hard-assignment shares of `embeddings`.
std::vector<SegmentReportRow> segment_report(const DeliveryPlan& plan,
                                             const SegmentationModel& model,
                                             const SegmentProfile& profile,
                                             const StaticSchema& schema,
                                             const Matrix& embeddings);
std::string segment_report_csv(std::span<const SegmentReportRow> rows);

}  // namespace reachseg

#pragma once

// Helpers shared by the training stages. Not part of the stable interface.

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "reachseg/pipeline/training.hpp"

namespace reachseg::detail {

inline constexpr std::uint64_t kSaltSplit = 0x5117;
inline constexpr std::uint64_t kSaltPretrain = 0x1001;
inline constexpr std::uint64_t kSaltKMeans = 0x2002;
inline constexpr std::uint64_t kSaltSelector = 0x3003;
inline constexpr std::uint64_t kSaltActorCritic = 0x4004;
inline constexpr std::uint64_t kSaltBeh2Stat = 0x5005;
inline constexpr std::uint64_t kSaltJoint = 0x6006;

Rng stage_rng(std::uint64_t seed, std::uint64_t salt);

std::vector<int> labels_of(const UserBatch& users);
UserBatch pick(const UserBatch& users, std::span<const std::size_t> indices);
std::vector<Parameter*> concat(std::initializer_list<std::vector<Parameter*>> groups);
std::vector<Matrix> snapshot(const std::vector<Parameter*>& params);
void restore(const std::vector<Parameter*>& params, const std::vector<Matrix>& values);
void zero_grads(const std::vector<Parameter*>& params);
void require_finite(double value, const std::string& stage, const std::string& loss,
                    std::size_t iteration);
std::vector<double> column(const Matrix& m);
std::vector<std::size_t> sample_clusters(const Matrix& pi, Rng& rng);

/// Σₖ πₖ·l₁(y, g_φ(e(k))) averaged over users: the exact expectation that the
/// sampled ℒ₁ estimates. Used for validation so it does not depend on draws.
double expected_centroid_loss(const Matrix& pi, std::span<const double> centroid_predictions,
                              std::span<const int> labels, std::span<const std::size_t> offsets);

struct DiscoveryLosses {
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
};
DiscoveryLosses validation_discovery_losses(const SegmentationModel& model,
                                            const EncodedUsers& users);

/// One Adam step on ℰ for ℒ_E = ℒ₁ + βℒ₃ with the current predictor.
/// Predictor gradients produced on the way are discarded.
void dictionary_step(SegmentationModel& model, std::span<const int> labels,
                     std::span<const std::size_t> clusters, const Matrix& pi,
                     std::span<const std::size_t> offsets, double beta, Rng& rng,
                     AdamOptimizer& dictionary_optimizer);

/// Tracks the best value of several validation losses. The first loss decides
/// which parameters are kept; stopping requires every tracked loss to have
/// gone `lookback` evaluations without improving, after `min_epochs` epochs.
class EarlyStopper {
 public:
  EarlyStopper(std::size_t min_epochs, std::size_t lookback, std::size_t tracked);
  /// Returns true when the first loss reached a new minimum.
  bool record(std::span<const double> losses);
  bool should_stop(std::size_t epochs) const;

 private:
  std::size_t min_epochs_;
  std::size_t lookback_;
  std::vector<double> best_;
  std::vector<std::size_t> last_improvement_;
  std::size_t evaluations_ = 0;
};

}  // namespace reachseg::detail

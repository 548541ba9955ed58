#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "reachseg/numerics/matrix.hpp"
#include "reachseg/synthdata/media_table.hpp"

// Reach, spend and the constrained reach objectives.

namespace reachseg {

struct MediaEconomics {
  double budget = 0.0;      // B
  double population = 0.0;  // N
  std::vector<double> costs;

  /// Per-user reach goal B/(N·χⱼ).
  double reach_goal(std::size_t medium) const;
  /// Throws invalid_argument on B ≤ 0, N ≤ 0 or a non-positive cost.
  void validate() const;
  /// Media whose reach goal exceeds 1 (B/(N·χⱼ) > 1). Callers may warn.
  std::vector<std::size_t> goals_above_ceiling() const;
};

/// B = fraction · N · 0.75² · min χ: a share of the spend needed to reach the
/// whole population at the highest rates on the cheapest medium.
double default_budget(double population, std::span<const double> costs, double fraction = 0.5);

/// Expected (ρ̄, η̄) for medium j under a factorized static distribution.
/// `p` holds the per-feature distributions concatenated in schema order.
/// Throws Unsupported when the tuple space exceeds 10⁶ entries.
MediaRate expected_rates(std::span<const double> p, const MediaTable& table, std::size_t medium);
std::vector<MediaRate> expected_rates(std::span<const double> p, const MediaTable& table);

inline constexpr std::size_t kMaxEnumeratedTuples = 1'000'000;

struct SegmentDelivery {
  double size = 0.0;                // nᵢ
  std::vector<MediaRate> rates;     // (ρ̄ᵢⱼ, η̄ᵢⱼ) per medium
  std::vector<double> assignment;   // Aᵢ·

  double reach_rate(std::size_t medium) const {
    return rates[medium].match * rates[medium].exposure;
  }
};

/// j′ = argmaxⱼ Aᵢⱼ ρ̄ᵢⱼ η̄ᵢⱼ with ties to the lowest index.
std::size_t chosen_medium(const SegmentDelivery& segment);

struct ReachResult {
  double reach = 0.0;
  std::vector<std::size_t> chosen;  // j′ per segment
};
/// R = Σᵢ maxⱼ(Aᵢⱼ ρ̄ᵢⱼ η̄ᵢⱼ)·nᵢ.
ReachResult reach(std::span<const SegmentDelivery> segments);

struct SpendResult {
  double spend = 0.0;
  double slack = 0.0;  // T_R = B − Spend
};
/// Spend = Σᵢ Aᵢⱼ′ ρ̄ᵢⱼ′ η̄ᵢⱼ′ χⱼ′ nᵢ.
SpendResult spend_and_constraint(std::span<const SegmentDelivery> segments,
                                 std::span<const std::size_t> chosen, const MediaEconomics& econ);

/// Σⱼ Aᵢⱼ (ρ̄ᵢⱼ η̄ᵢⱼ − B/(N χⱼ))².
double lr_cluster_specific_mse(const SegmentDelivery& segment, const MediaEconomics& econ);
/// Σᵢ Σⱼ Aᵢⱼ nᵢ (ρ̄ᵢⱼ η̄ᵢⱼ − B/(N χⱼ))² / Σᵢ nᵢ. Throws InvalidState when Σnᵢ = 0.
double lr_cluster_agnostic_mse(std::span<const SegmentDelivery> segments,
                               const MediaEconomics& econ);

enum class Formulation { kCsse, kCase, kSlack, kBarrier, kAlm };

/// Accepts csse, case, smin/slack, barr/barrier, alm. Throws invalid_argument otherwise.
Formulation parse_formulation(const std::string& tag);
std::string formulation_name(Formulation formulation);

struct DualState {
  Formulation formulation = Formulation::kAlm;
  double w = 1.0;
  double mu = 0.1;
  double lambda = 0.0;
  std::size_t update_count = 0;
};

/// Initial duals: w = 1 with μ = 0.3 for slack/barrier; λ = 0.1, μ = 0.1 for ALM.
DualState make_dual_state(Formulation formulation);

/// slack/barrier: w ← μ·w. alm: λ ← max(λ + μ·T_R/B, 0). csse/case: counter only.
DualState dual_update(DualState dual, double slack, double budget);

inline constexpr double kMinReach = 1.0 + 1e-6;

/// Scalar objective value with its partial derivatives w.r.t. R and T_R.
struct ReachTerm {
  double value = 0.0;
  double d_reach = 0.0;
  double d_slack = 0.0;
};

/// 1/ln R with R clamped to ≥ 1+1e−6 (derivative 0 while clamped).
ReachTerm inverse_log_reach(double reach);
/// 1/ln R + max(T_R, 0)/w.
ReachTerm lr_slack(double reach, double slack, const DualState& dual);
/// 1/ln R − log(T_R)/w; throws InfeasibleIterate when T_R ≤ 0.
/// With `paper_literal` the term is −log(−T_R)/w, defined only for T_R < 0;
/// for T_R ≥ 0 the log term is dropped.
ReachTerm lr_barrier(double reach, double slack, const DualState& dual, bool paper_literal = false);
/// 1/ln R − λ·T_R/B + (μ/2)(T_R/B)².
ReachTerm lr_alm(double reach, double slack, const MediaEconomics& econ, const DualState& dual);

/// ℒ_R for a whole set of segments under one formulation, with gradients
/// w.r.t. every Aᵢⱼ and nᵢ. The medium j′ is held fixed per segment.
struct ReachObjective {
  double value = 0.0;
  double reach = 0.0;
  double spend = 0.0;
  double slack = 0.0;
  std::vector<std::size_t> chosen;
  Matrix d_assignment;         // K×M
  std::vector<double> d_size;  // K
};
ReachObjective evaluate_reach_objective(std::span<const SegmentDelivery> segments,
                                        const MediaEconomics& econ, const DualState& dual,
                                        bool paper_literal_barrier = false);

}  // namespace reachseg

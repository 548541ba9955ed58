#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace reachseg {

/// Probability that a random positive outranks a random negative, ties
/// counting one half. Throws UndefinedMetric when only one class is present.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// 100·(Spend − B)/B; negative means underspend.
double within_pct_budget(double spend, double budget);
/// Spend / R. Throws UndefinedMetric when R = 0.
double spend_per_unit_reach(double spend, double reach);
/// Spend per unit reach / AUROC. Throws UndefinedMetric when AUROC = 0.
double effective_spend(double spend_per_reach, double auroc_value);
/// (R / (Spend/B))·AUROC. Throws UndefinedMetric when Spend = 0.
double reach_effc_effe(double reach, double spend, double budget, double auroc_value);

/// One evaluated cell. Budget metrics are absent for the unconstrained baseline.
struct ModelMetrics {
  double auroc_ybar = 0.0;
  std::optional<double> within_pct_budget;
  double spend_per_unit_reach = 0.0;
  double effective_spend = 0.0;
  std::optional<double> reach_effc_effe;
};

ModelMetrics compute_metrics(double reach, double spend, double budget, double auroc_value,
                             bool budget_metrics);

/// A metrics table row: per seed ("seed:<n>"), "mean" or "stderr".
struct MetricsRow {
  std::string model;
  std::size_t k = 0;
  std::string stat;
  std::optional<double> auroc_ybar;
  std::optional<double> within_pct_budget;
  std::optional<double> spend_per_unit_reach;
  std::optional<double> effective_spend;
  std::optional<double> reach_effc_effe;
};

struct Summary {
  double mean = 0.0;
  double stderr_value = 0.0;  // sample standard deviation / √n; 0 for n = 1
};
Summary summarize(std::span<const double> values);

/// Mean and stderr rows over per-seed metrics. A column is undefined in the
/// summary when it is undefined for any seed.
std::vector<MetricsRow> aggregate_metrics(const std::string& model, std::size_t k,
                                          std::span<const ModelMetrics> per_seed);

/// Header: model,K,stat,auroc_ybar,within_pct_budget,spend_per_unit_reach,
/// effective_spend,reach_effc_effe. Undefined cells are written as "--".
std::string metrics_csv(std::span<const MetricsRow> rows);

}  // namespace reachseg

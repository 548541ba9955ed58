#include "reachseg/evaluation/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "reachseg/errors.hpp"
#include "reachseg/pipeline/trace.hpp"

namespace reachseg {

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("auroc: scores and labels differ in length");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over tied groups (Mann–Whitney U).
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] != 0) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetric("auroc: labels contain a single class");
  }
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

double within_pct_budget(double spend, double budget) {
  if (!(budget > 0.0)) throw std::invalid_argument("within_pct_budget: budget must be positive");
  return 100.0 * (spend - budget) / budget;
}

double spend_per_unit_reach(double spend, double reach) {
  if (reach == 0.0) throw UndefinedMetric("spend_per_unit_reach: reach is zero");
  return spend / reach;
}

double effective_spend(double spend_per_reach, double auroc_value) {
  if (auroc_value == 0.0) throw UndefinedMetric("effective_spend: AUROC is zero");
  return spend_per_reach / auroc_value;
}

double reach_effc_effe(double reach, double spend, double budget, double auroc_value) {
  if (spend == 0.0) throw UndefinedMetric("reach_effc_effe: spend is zero");
  return reach / (spend / budget) * auroc_value;
}

ModelMetrics compute_metrics(double reach, double spend, double budget, double auroc_value,
                             bool budget_metrics) {
  ModelMetrics m;
  m.auroc_ybar = auroc_value;
  m.spend_per_unit_reach = spend_per_unit_reach(spend, reach);
  m.effective_spend = effective_spend(m.spend_per_unit_reach, auroc_value);
  if (budget_metrics) {
    m.within_pct_budget = within_pct_budget(spend, budget);
    m.reach_effc_effe = reach_effc_effe(reach, spend, budget, auroc_value);
  }
  return m;
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  const double n = static_cast<double>(values.size());
  Summary s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stderr_value = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

std::vector<MetricsRow> aggregate_metrics(const std::string& model, std::size_t k,
                                          std::span<const ModelMetrics> per_seed) {
  MetricsRow mean{model, k, "mean", {}, {}, {}, {}, {}};
  MetricsRow err{model, k, "stderr", {}, {}, {}, {}, {}};
  if (per_seed.empty()) return {mean, err};
  const auto fill = [&](auto getter, std::optional<double> MetricsRow::*field) {
    std::vector<double> values;
    for (const ModelMetrics& m : per_seed) {
      const std::optional<double> v = getter(m);
      if (!v) return;
      values.push_back(*v);
    }
    const Summary s = summarize(values);
    mean.*field = s.mean;
    err.*field = s.stderr_value;
  };
  fill([](const ModelMetrics& m) { return std::optional<double>(m.auroc_ybar); },
       &MetricsRow::auroc_ybar);
  fill([](const ModelMetrics& m) { return m.within_pct_budget; }, &MetricsRow::within_pct_budget);
  fill([](const ModelMetrics& m) { return std::optional<double>(m.spend_per_unit_reach); },
       &MetricsRow::spend_per_unit_reach);
  fill([](const ModelMetrics& m) { return std::optional<double>(m.effective_spend); },
       &MetricsRow::effective_spend);
  fill([](const ModelMetrics& m) { return m.reach_effc_effe; }, &MetricsRow::reach_effc_effe);
  return {mean, err};
}

std::string metrics_csv(std::span<const MetricsRow> rows) {
  const auto cell = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string("--");
  };
  std::ostringstream out;
  out << "model,K,stat,auroc_ybar,within_pct_budget,spend_per_unit_reach,effective_spend,"
         "reach_effc_effe\n";
  for (const MetricsRow& r : rows) {
    out << r.model << ',' << r.k << ',' << r.stat << ',' << cell(r.auroc_ybar) << ','
        << cell(r.within_pct_budget) << ',' << cell(r.spend_per_unit_reach) << ','
        << cell(r.effective_spend) << ',' << cell(r.reach_effc_effe) << '\n';
  }
  return out.str();
}

}  // namespace reachseg

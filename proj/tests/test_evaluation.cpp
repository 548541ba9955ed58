#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "reachseg/errors.hpp"
#include "reachseg/evaluation/evaluate.hpp"
#include "reachseg/evaluation/metrics.hpp"
#include "reachseg/pipeline/trace.hpp"
#include "test_util.hpp"

namespace reachseg {
namespace {

using testing::random_matrix;
using testing::random_simplex;

TEST(Auroc, WorkedExample) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auroc(s, y), 0.75);
  const std::vector<double> sep{0.1, 0.2, 0.9, 0.95};
  EXPECT_DOUBLE_EQ(auroc(sep, y), 1.0);
}

TEST(Auroc, SingleClassIsUndefined) {
  const std::vector<double> s{0.1, 0.2};
  const std::vector<int> y{1, 1};
  EXPECT_THROW(auroc(s, y), UndefinedMetric);
  const std::vector<int> short_labels{1};
  EXPECT_THROW(auroc(s, short_labels), std::invalid_argument);
}

TEST(Auroc, MatchesPairCountWithTies) {
  Rng rng(41);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng() % 49;
    std::vector<double> s(n);
    std::vector<int> y(n);
    // coarse scores force ties
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 6) / 5.0;
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_NEAR(auroc(s, y), oracle::auroc(s, y), 1e-12);
  }
}

TEST(Auroc, ChanceAndMonotoneInvariance) {
  Rng rng(42);
  std::vector<double> s(20000);
  std::vector<int> y(20000);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = u(rng);
    y[i] = static_cast<int>(rng() % 2);
  }
  EXPECT_NEAR(auroc(s, y), 0.5, 0.05);
  std::vector<double> t(s.size());
  std::transform(s.begin(), s.end(), t.begin(), [](double v) { return std::exp(3 * v) - 7; });
  EXPECT_DOUBLE_EQ(auroc(t, y), auroc(s, y));
}

TEST(Metrics, WorkedExamples) {
  EXPECT_EQ(within_pct_budget(100, 100), 0.0);
  EXPECT_NEAR(within_pct_budget(88, 100), -12.0, 1e-12);
  EXPECT_NEAR(within_pct_budget(105, 100), 5.0, 1e-12);
  EXPECT_NEAR(spend_per_unit_reach(52.64, 26.32), 2.0, 1e-15);
  EXPECT_EQ(spend_per_unit_reach(0.0, 3.0), 0.0);
  EXPECT_THROW(spend_per_unit_reach(1.0, 0.0), UndefinedMetric);
  EXPECT_EQ(effective_spend(7.5, 1.0), 7.5);
  EXPECT_THROW(effective_spend(7.5, 0.0), UndefinedMetric);
  EXPECT_NEAR(reach_effc_effe(50, 90, 100, 0.9), 50.0, 1e-12);
  EXPECT_NEAR(reach_effc_effe(50, 100, 100, 0.8), 40.0, 1e-12);
  EXPECT_NEAR(reach_effc_effe(50, 90, 200, 0.9), 100.0, 1e-12);
  EXPECT_THROW(reach_effc_effe(50, 0, 100, 0.9), UndefinedMetric);
}

TEST(Metrics, PublishedSpotChecks) {
  EXPECT_NEAR(effective_spend(66.993, 0.873), 76.751, 0.05);
  EXPECT_NEAR(effective_spend(58.548, 0.957), 61.196, 0.05);
}

TEST(Metrics, Identities) {
  Rng rng(43);
  std::uniform_real_distribution<double> u(0.01, 1000.0), a(0.01, 1.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const double spend = u(rng), reach = u(rng), auc = a(rng), scale = u(rng);
    const double spur = spend_per_unit_reach(spend, reach);
    EXPECT_NEAR(effective_spend(spur, auc) * auc, spur, 1e-12 * spur);
    EXPECT_NEAR(spend_per_unit_reach(spend * scale, reach * scale), spur, 1e-12 * spur);
  }
}

TEST(Metrics, UnconstrainedRowOmitsBudgetColumns) {
  const ModelMetrics uc = compute_metrics(10, 500, 400, 0.8, false);
  EXPECT_FALSE(uc.within_pct_budget);
  EXPECT_FALSE(uc.reach_effc_effe);
  EXPECT_NEAR(uc.spend_per_unit_reach, 50, 1e-12);
  EXPECT_NEAR(uc.effective_spend, 62.5, 1e-12);
  const ModelMetrics bc = compute_metrics(10, 500, 400, 0.8, true);
  EXPECT_NEAR(*bc.within_pct_budget, 25.0, 1e-12);
  EXPECT_NEAR(*bc.reach_effc_effe, 10 / 1.25 * 0.8, 1e-12);
}

TEST(Metrics, SummaryAndCsv) {
  const std::vector<double> v{1, 2, 3, 4};
  const Summary s = summarize(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.stderr_value, std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
  const std::vector<double> one{7};
  EXPECT_EQ(summarize(one).stderr_value, 0.0);

  const std::vector<ModelMetrics> seeds{compute_metrics(10, 500, 400, 0.8, false),
                                        compute_metrics(20, 600, 400, 0.9, false)};
  const auto rows = aggregate_metrics("disc-uc", 5, seeds);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].stat, "mean");
  EXPECT_EQ(rows[1].stat, "stderr");
  EXPECT_NEAR(*rows[0].auroc_ybar, 0.85, 1e-15);
  const std::string csv = metrics_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "model,K,stat,auroc_ybar,within_pct_budget,spend_per_unit_reach,effective_spend,reach_effc_effe");
  EXPECT_NE(csv.find("disc-uc,5,mean," + format_double(*rows[0].auroc_ybar) + ",--,"), std::string::npos);
  EXPECT_NE(csv.find(",--\n"), std::string::npos);
}

// ---- baselines --------------------------------------------------------------

std::vector<SegmentDelivery> random_segments(Rng& rng, std::size_t k, std::size_t m) {
  std::uniform_real_distribution<double> rate(0.25, 0.75), size(1.0, 100.0);
  std::vector<SegmentDelivery> out(k);
  for (auto& s : out) {
    s.size = size(rng);
    for (std::size_t j = 0; j < m; ++j) s.rates.push_back({rate(rng), rate(rng)});
    s.assignment = random_simplex(m, rng);
  }
  return out;
}

TEST(DiscUc, PicksHighestReachMedium) {
  Rng rng(44);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng() % 3;
    const auto segs = random_segments(rng, 1 + rng() % 4, m);
    MediaEconomics econ{100.0, 100.0, {}};
    for (std::size_t j = 0; j < m; ++j) econ.costs.push_back(50.0 + 300.0 * j);
    const DeliveryPlan plan = baseline_disc_uc(segs, econ);
    for (std::size_t i = 0; i < segs.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < m; ++j) if (segs[i].reach_rate(j) > segs[i].reach_rate(best)) best = j;
      ASSERT_TRUE(plan.media[i]);
      EXPECT_EQ(*plan.media[i], best);
    }
  }
}

// Independent rendition of the greedy rule for the default ordering.
double greedy_spend(const std::vector<SegmentDelivery>& segs, const MediaEconomics& econ,
                    std::vector<std::optional<std::size_t>>& media) {
  std::vector<std::size_t> order(segs.size());
  std::iota(order.begin(), order.end(), 0);
  const auto best_reach = [&](std::size_t i) {
    double b = 0.0;
    for (std::size_t j = 0; j < segs[i].rates.size(); ++j) b = std::max(b, segs[i].reach_rate(j) * segs[i].size);
    return b;
  };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return best_reach(a) > best_reach(b); });
  media.assign(segs.size(), std::nullopt);
  double left = econ.budget, spent = 0.0;
  for (std::size_t i : order) {
    std::vector<std::size_t> js(segs[i].rates.size());
    std::iota(js.begin(), js.end(), 0);
    std::sort(js.begin(), js.end(), [&](std::size_t a, std::size_t b) {
      return segs[i].reach_rate(a) > segs[i].reach_rate(b);
    });
    for (std::size_t j : js) {
      const double c = segs[i].reach_rate(j) * segs[i].size * econ.costs[j];
      if (c <= left) {
        media[i] = j;
        left -= c;
        spent += c;
        break;
      }
    }
  }
  return spent;
}

TEST(DiscBc, StaysWithinBudgetAndMatchesGreedyOracle) {
  Rng rng(45);
  std::uniform_real_distribution<double> frac(0.0, 1.2);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 1 + rng() % 3;
    const auto segs = random_segments(rng, 1 + rng() % 5, m);
    MediaEconomics econ{1.0, 100.0, {}};
    for (std::size_t j = 0; j < m; ++j) econ.costs.push_back(50.0 + 10.0 * j);
    const DeliveryPlan uc = baseline_disc_uc(segs, econ);
    econ.budget = std::max(1e-9, frac(rng) * uc.spend);
    const DeliveryPlan bc = baseline_disc_bc(segs, econ);
    EXPECT_LE(bc.spend, econ.budget * (1 + 1e-12));
    std::vector<std::optional<std::size_t>> media;
    EXPECT_NEAR(greedy_spend(segs, econ, media), bc.spend, 1e-9);
    EXPECT_EQ(media, bc.media);
    const DeliveryPlan cost_order = baseline_disc_bc(segs, econ, GreedyOrder::kReachPerCost);
    EXPECT_LE(cost_order.spend, econ.budget * (1 + 1e-12));
  }
}

TEST(DiscBc, SlackAndZeroBudget) {
  Rng rng(46);
  const auto segs = random_segments(rng, 4, 3);
  MediaEconomics econ{1.0, 100.0, {50, 60, 70}};
  const DeliveryPlan uc = baseline_disc_uc(segs, econ);
  econ.budget = uc.spend * 1.01;
  const DeliveryPlan bc = baseline_disc_bc(segs, econ);
  EXPECT_EQ(bc.media, uc.media);
  EXPECT_DOUBLE_EQ(bc.reach, uc.reach);
  EXPECT_DOUBLE_EQ(bc.spend, uc.spend);

  econ.budget = 0.0;
  const DeliveryPlan none = baseline_disc_bc(segs, econ);
  EXPECT_EQ(none.spend, 0.0);
  EXPECT_EQ(none.reach, 0.0);
  for (const auto& m : none.media) EXPECT_FALSE(m);
}

TEST(DiscBc, ToyInstanceExhaustive) {
  // 3 segments, 2 media, no ties; feasible plans enumerated directly
  const std::vector<SegmentDelivery> segs{
      {100, {{0.7, 0.7}, {0.5, 0.5}}, {0.5, 0.5}},  // 49 / 25
      {80, {{0.4, 0.4}, {0.6, 0.6}}, {0.5, 0.5}},   // 12.8 / 28.8
      {50, {{0.3, 0.3}, {0.5, 0.6}}, {0.5, 0.5}},   // 4.5 / 15
  };
  const MediaEconomics econ{2500.0, 230.0, {50.0, 30.0}};
  const DeliveryPlan bc = baseline_disc_bc(segs, econ);
  // segment 0 (49 reach) costs 2450 on medium 0 → accepted; 50 left:
  // segment 1 best is medium 1 at 864 → no; medium 0 at 640 → no; segment 2 → none fits
  ASSERT_EQ(bc.media.size(), 3u);
  EXPECT_EQ(bc.media[0], std::optional<std::size_t>(0));
  EXPECT_FALSE(bc.media[1]);
  EXPECT_FALSE(bc.media[2]);
  EXPECT_NEAR(bc.spend, 2450.0, 1e-9);
  EXPECT_LE(bc.spend, econ.budget);
}

TEST(Beh2StatBaseline, RandomReference) {
  EXPECT_NEAR(1.0 / 6.0, 0.17, 0.005);
  FeatureAccuracy f{"source", 2, 0.6, 0.5};
  EXPECT_EQ(f.random_baseline, 0.5);
}

// ---- model-backed evaluation --------------------------------------------------

SegmentationModel small_model(std::size_t k, Rng& rng) {
  ModelConfig c;
  c.encoder.vocabulary_size = 10;
  c.encoder.embed_dim = 6;
  c.encoder.hidden_dim = 6;
  c.clusters = k;
  c.beh2stat_width = 8;
  c.beh2stat_depth = 2;
  c.assigner_width = 5;
  c.static_classes = {3, 2};
  c.media = 2;
  SegmentationModel m(c, rng);
  m.dictionary.centroids.value = random_matrix(k, 6, rng);
  return m;
}

StaticSchema small_schema() {
  StaticSchema s;
  s.features = {{"a", 3}, {"b", 2}};
  s.media_count = 2;
  return s;
}

TEST(SegmentReport, ProportionsAndArgmaxTuples) {
  for (std::size_t k : {1u, 4u}) {
    Rng rng(47 + k);
    const SegmentationModel model = small_model(k, rng);
    const MediaTable table = generate_media_table(small_schema(), 3);
    const MediaEconomics econ{500.0, 100.0, {50, 60}};
    const SegmentProfile profile = profile_segments(model, table);
    const Matrix z = random_matrix(100, 6, rng);
    const DeliveryPlan plan = harden_plan(hard_segments(model, profile, z), econ);
    const auto rows = segment_report(plan, model, profile, small_schema(), z);
    ASSERT_EQ(rows.size(), k);
    double total = 0.0;
    for (const auto& r : rows) total += r.proportion;
    EXPECT_NEAR(total, 1.0, 1e-9);
    if (k == 1) {
      EXPECT_DOUBLE_EQ(rows[0].proportion, 1.0);
    }

    const Matrix p = model.beh2stat.forward(model.dictionary.centroids.value);
    for (std::size_t i = 0; i < k; ++i) {
      const auto head = p.row(i).subspan(0, 3);
      const int a = static_cast<int>(std::max_element(head.begin(), head.end()) - head.begin());
      const int b = p(i, 4) > p(i, 3) ? 1 : 0;
      EXPECT_EQ(rows[i].static_tuple, (std::vector<int>{a, b}));
      EXPECT_EQ(rows[i].tuple_index, static_cast<std::size_t>(a * 2 + b));
    }
    const std::string csv = segment_report_csv(rows);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(k + 1));
  }
}

TEST(Beh2StatAccuracy, ConstantPredictorOnBalancedClasses) {
  Rng rng(49);
  SegmentationModel model = small_model(2, rng);
  // zero every weight: all heads become uniform and argmax picks class 0
  for (Parameter* p : model.beh2stat.parameters()) p->value.set_zero();
  std::vector<UserRecord> users;
  for (int u = 0; u < 600; ++u) {
    UserRecord r;
    r.user_id = std::to_string(u);
    r.sessions = {{u % 10}};
    r.labels = {0};
    r.static_classes = {u % 3, u % 2};
    users.push_back(r);
  }
  const auto acc = beh2stat_accuracy(model, small_schema(), as_batch(users));
  ASSERT_EQ(acc.size(), 2u);
  EXPECT_NEAR(acc[0].accuracy, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(acc[1].accuracy, 0.5, 1e-12);
  EXPECT_NEAR(acc[0].random_baseline, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(acc[1].random_baseline, 0.5);
}

TEST(CentroidScores, UseArgmaxCluster) {
  Rng rng(50);
  const SegmentationModel model = small_model(3, rng);
  const Matrix z = random_matrix(20, 6, rng);
  const auto scores = centroid_scores(model, z);
  const Matrix pi = model.selector.forward(z);
  const Matrix preds = model.predictor.forward(model.dictionary.centroids.value);
  for (std::size_t r = 0; r < 20; ++r) {
    const auto row = pi.row(r);
    const std::size_t c = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    EXPECT_EQ(scores[r], preds[c]);
  }
}

}  // namespace
}  // namespace reachseg

#include "reachseg/evaluation/evaluate.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "reachseg/evaluation/metrics.hpp"

namespace reachseg {

DeliveryPlan baseline_disc_uc(std::span<const SegmentDelivery> segments,
                              const MediaEconomics& econ) {
  std::vector<std::optional<std::size_t>> media;
  for (const SegmentDelivery& s : segments) {
    std::vector<double> q(s.rates.size());
    for (std::size_t j = 0; j < q.size(); ++j) q[j] = s.reach_rate(j);
    media.emplace_back(argmax(q));
  }
  return plan_with_media(segments, media, econ);
}

DeliveryPlan baseline_disc_bc(std::span<const SegmentDelivery> segments,
                              const MediaEconomics& econ, GreedyOrder order) {
  const auto medium_score = [&](const SegmentDelivery& s, std::size_t j) {
    return order == GreedyOrder::kBestReach ? s.reach_rate(j) : s.reach_rate(j) / econ.costs.at(j);
  };
  const auto segment_score = [&](const SegmentDelivery& s) {
    double best = 0.0;
    for (std::size_t j = 0; j < s.rates.size(); ++j) {
      const double v = order == GreedyOrder::kBestReach ? s.reach_rate(j) * s.size
                                                        : medium_score(s, j);
      best = std::max(best, v);
    }
    return best;
  };

  std::vector<std::size_t> ranking(segments.size());
  std::iota(ranking.begin(), ranking.end(), std::size_t{0});
  std::stable_sort(ranking.begin(), ranking.end(), [&](std::size_t a, std::size_t b) {
    return segment_score(segments[a]) > segment_score(segments[b]);
  });

  std::vector<std::optional<std::size_t>> media(segments.size());
  double remaining = econ.budget;
  for (std::size_t i : ranking) {
    if (remaining <= 0.0) break;
    const SegmentDelivery& s = segments[i];
    std::vector<std::size_t> options(s.rates.size());
    std::iota(options.begin(), options.end(), std::size_t{0});
    std::stable_sort(options.begin(), options.end(), [&](std::size_t a, std::size_t b) {
      return medium_score(s, a) > medium_score(s, b);
    });
    for (std::size_t j : options) {
      const double cost = s.reach_rate(j) * econ.costs.at(j) * s.size;
      if (cost <= remaining) {
        media[i] = j;
        remaining -= cost;
        break;
      }
    }
  }
  return plan_with_media(segments, media, econ);
}

std::vector<double> centroid_scores(const SegmentationModel& model, const Matrix& embeddings) {
  const Matrix centroid_predictions = model.predictor.forward(model.dictionary.centroids.value);
  const std::vector<std::size_t> clusters = hard_clusters(model, embeddings);
  std::vector<double> scores(clusters.size());
  for (std::size_t r = 0; r < clusters.size(); ++r) scores[r] = centroid_predictions[clusters[r]];
  return scores;
}

double auroc_ybar(const SegmentationModel& model, const EncodedUsers& users,
                  bool final_session_only) {
  const std::vector<double> scores = centroid_scores(model, users.z);
  if (!final_session_only) return auroc(scores, users.labels);
  std::vector<double> last_scores;
  std::vector<int> last_labels;
  for (std::size_t u = 0; u < users.users(); ++u) {
    const std::size_t r = users.offsets[u + 1] - 1;
    last_scores.push_back(scores[r]);
    last_labels.push_back(users.labels[r]);
  }
  return auroc(last_scores, last_labels);
}

std::vector<FeatureAccuracy> beh2stat_accuracy(const SegmentationModel& model,
                                               const StaticSchema& schema,
                                               const UserBatch& users) {
  if (users.empty()) throw std::invalid_argument("beh2stat_accuracy: no users");
  const EncodedUsers encoded = encode_users(model.encoder, users);
  std::vector<std::size_t> final_rows;
  for (std::size_t u = 0; u < encoded.users(); ++u) final_rows.push_back(encoded.offsets[u + 1] - 1);
  const Matrix p = model.beh2stat.forward(gather_rows(encoded.z, final_rows));

  std::vector<FeatureAccuracy> out;
  std::size_t offset = 0;
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    const std::size_t classes = schema.features[f].classes;
    std::size_t correct = 0;
    for (std::size_t u = 0; u < users.size(); ++u) {
      const auto head = p.row(u).subspan(offset, classes);
      if (static_cast<int>(argmax(head)) == users[u]->static_classes.at(f)) ++correct;
    }
    out.push_back({schema.features[f].name, classes,
                   static_cast<double>(correct) / static_cast<double>(users.size()),
                   1.0 / static_cast<double>(classes)});
    offset += classes;
  }
  return out;
}

std::vector<SegmentReportRow> segment_report(const DeliveryPlan& plan,
                                             const SegmentationModel& model,
                                             const SegmentProfile& profile,
                                             const StaticSchema& schema,
                                             const Matrix& embeddings) {
  const std::size_t k = model.config.clusters;
  const std::vector<double> counts = cluster_counts(hard_clusters(model, embeddings), k);
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::vector<SegmentReportRow> rows;
  for (std::size_t i = 0; i < k; ++i) {
    SegmentReportRow row;
    row.segment = i;
    row.proportion = total > 0.0 ? counts[i] / total : 0.0;
    std::size_t offset = 0;
    for (const StaticFeature& f : schema.features) {
      const auto head = profile.static_distributions.row(i).subspan(offset, f.classes);
      row.static_tuple.push_back(static_cast<int>(argmax(head)));
      offset += f.classes;
    }
    row.tuple_index = schema.tuple_index(row.static_tuple);
    if (i < plan.media.size()) row.medium = plan.media[i];
    if (row.medium) {
      row.match = profile.rates[i][*row.medium].match;
      row.exposure = profile.rates[i][*row.medium].exposure;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string segment_report_csv(std::span<const SegmentReportRow> rows) {
  std::ostringstream out;
  out << "segment,proportion,static_tuple,tuple_index,medium,match,exposure\n";
  for (const SegmentReportRow& r : rows) {
    out << r.segment << ',' << format_double(r.proportion) << ',';
    for (std::size_t f = 0; f < r.static_tuple.size(); ++f) {
      out << (f ? "-" : "") << r.static_tuple[f];
    }
    out << ',' << r.tuple_index << ',' << (r.medium ? std::to_string(*r.medium) : "--") << ','
        << format_double(r.match) << ',' << format_double(r.exposure) << '\n';
  }
  return out.str();
}

}  // namespace reachseg

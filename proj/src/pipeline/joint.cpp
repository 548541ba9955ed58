#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "reachseg/errors.hpp"
#include "reachseg/pipeline/training.hpp"
#include "reachseg/pipeline/training_detail.hpp"

namespace reachseg {

DeliveryPlan plan_with_media(std::span<const SegmentDelivery> segments,
                             std::span<const std::optional<std::size_t>> media,
                             const MediaEconomics& econ) {
  if (media.size() != segments.size()) {
    throw std::invalid_argument("plan_with_media: one medium choice per segment required");
  }
  DeliveryPlan plan;
  plan.budget = econ.budget;
  plan.media.assign(media.begin(), media.end());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    SegmentDelivery s = segments[i];
    std::fill(s.assignment.begin(), s.assignment.end(), 0.0);
    if (media[i]) {
      const std::size_t j = *media[i];
      if (j >= s.rates.size()) throw std::out_of_range("plan_with_media: medium index");
      s.assignment[j] = 1.0;
      const double r = s.reach_rate(j) * s.size;
      plan.reach += r;
      plan.spend += r * econ.costs.at(j);
    }
    plan.segments.push_back(std::move(s));
  }
  plan.slack = econ.budget - plan.spend;
  return plan;
}

DeliveryPlan harden_plan(std::span<const SegmentDelivery> segments, const MediaEconomics& econ) {
  std::vector<std::optional<std::size_t>> media;
  media.reserve(segments.size());
  for (const SegmentDelivery& s : segments) media.emplace_back(chosen_medium(s));
  return plan_with_media(segments, media, econ);
}

SegmentProfile profile_segments(const SegmentationModel& model, const MediaTable& table) {
  SegmentProfile profile;
  profile.static_distributions = model.beh2stat.forward(model.dictionary.centroids.value);
  for (std::size_t k = 0; k < profile.static_distributions.rows(); ++k) {
    profile.rates.push_back(expected_rates(profile.static_distributions.row(k), table));
  }
  profile.assignment = model.assigner.forward(profile.static_distributions);
  return profile;
}

std::vector<std::size_t> hard_clusters(const SegmentationModel& model, const Matrix& embeddings) {
  const Matrix pi = model.selector.forward(embeddings);
  std::vector<std::size_t> out(pi.rows());
  for (std::size_t r = 0; r < pi.rows(); ++r) out[r] = argmax(pi.row(r));
  return out;
}

std::vector<double> cluster_counts(std::span<const std::size_t> clusters, std::size_t k) {
  std::vector<double> counts(k, 0.0);
  for (std::size_t c : clusters) counts.at(c) += 1.0;
  return counts;
}

std::vector<SegmentDelivery> hard_segments(const SegmentationModel& model,
                                           const SegmentProfile& profile,
                                           const Matrix& embeddings) {
  const std::size_t k = model.config.clusters;
  const std::vector<double> counts = cluster_counts(hard_clusters(model, embeddings), k);
  std::vector<SegmentDelivery> segments(k);
  for (std::size_t i = 0; i < k; ++i) {
    segments[i].size = counts[i];
    segments[i].rates = profile.rates[i];
    const auto row = profile.assignment.row(i);
    segments[i].assignment.assign(row.begin(), row.end());
  }
  return segments;
}

namespace {

struct ProjectedObjective {
  ReachObjective objective;
  bool feasible = true;
};

// For the feasible-side barrier an infeasible iterate is pulled toward each
// segment's cheapest delivery (min χⱼ ρ̄ᵢⱼ η̄ᵢⱼ) in steps of a quarter; the
// gradient w.r.t. the unprojected A carries the (1 − s) factor.
ProjectedObjective evaluate_with_projection(std::vector<SegmentDelivery> segments,
                                            const MediaEconomics& econ, const DualState& dual,
                                            bool paper_literal) {
  if (dual.formulation != Formulation::kBarrier || paper_literal) {
    return {evaluate_reach_objective(segments, econ, dual, paper_literal), true};
  }
  try {
    return {evaluate_reach_objective(segments, econ, dual), true};
  } catch (const InfeasibleIterate&) {
  }
  const std::vector<SegmentDelivery> original = segments;
  for (double s : {0.25, 0.5, 0.75, 1.0}) {
    for (std::size_t i = 0; i < segments.size(); ++i) {
      std::size_t cheapest = 0;
      for (std::size_t j = 1; j < econ.costs.size(); ++j) {
        if (econ.costs[j] * original[i].reach_rate(j) <
            econ.costs[cheapest] * original[i].reach_rate(cheapest)) {
          cheapest = j;
        }
      }
      for (std::size_t j = 0; j < econ.costs.size(); ++j) {
        segments[i].assignment[j] =
            (1.0 - s) * original[i].assignment[j] + (j == cheapest ? s : 0.0);
      }
    }
    try {
      ProjectedObjective out{evaluate_reach_objective(segments, econ, dual), true};
      out.objective.d_assignment *= (1.0 - s);
      return out;
    } catch (const InfeasibleIterate&) {
    }
  }
  ProjectedObjective out;
  out.feasible = false;
  out.objective = evaluate_reach_objective(original, econ, make_dual_state(Formulation::kCsse));
  out.objective.value = 0.0;
  out.objective.d_assignment.set_zero();
  std::fill(out.objective.d_size.begin(), out.objective.d_size.end(), 0.0);
  return out;
}

std::vector<SegmentDelivery> soft_segments(const Matrix& pi, double scale,
                                           const SegmentProfile& profile,
                                           const Matrix& assignment) {
  const Matrix sizes = column_sums(pi);
  std::vector<SegmentDelivery> segments(pi.cols());
  for (std::size_t i = 0; i < pi.cols(); ++i) {
    segments[i].size = sizes[i] * scale;
    segments[i].rates = profile.rates[i];
    const auto row = assignment.row(i);
    segments[i].assignment.assign(row.begin(), row.end());
  }
  return segments;
}

Matrix concat_rows(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  std::vector<double> data(a.values().begin(), a.values().end());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return Matrix(a.rows() + b.rows(), a.cols(), std::move(data));
}

}  // namespace

JointResult train_joint(SegmentationModel& model, const DataSplit& data, const MediaTable& table,
                        const MediaEconomics& econ, const TrainConfig& config,
                        ConvergenceTrace& trace) {
  config.validate();
  econ.validate();
  if (!model.stages.encoder_pretrained || !model.stages.clusters_initialized ||
      !model.stages.selector_pretrained) {
    throw InvalidState("train_joint: stage 1 (pre-training) has not completed");
  }
  if (!model.stages.actor_critic_trained && !config.ablate_step2) {
    throw InvalidState("train_joint: stage 2 (actor-critic) has not completed");
  }
  if (!model.stages.beh2stat_trained) {
    throw InvalidState("train_joint: Beh2Stat has not been trained");
  }
  if (table.media_count() != model.config.media || econ.costs.size() != model.config.media) {
    throw std::invalid_argument("train_joint: media count differs between model, table and costs");
  }

  const std::string stage = "joint";
  Rng rng = detail::stage_rng(config.seed, detail::kSaltJoint);
  const EncodedUsers train = encode_users(model.encoder, data.train);
  EncodedUsers val;
  if (!data.validation.empty()) val = encode_users(model.encoder, data.validation);

  JointResult result;
  result.dual = make_dual_state(config.formulation);
  const auto floor_weight = [&](DualState& d) { d.w = std::max(d.w, config.min_dual_weight); };
  const std::vector<Parameter*> step_params =
      detail::concat({model.selector.parameters(), model.predictor.parameters(),
                      model.assigner.parameters(), {&model.dictionary.centroids}});

  if (config.joint_iterations > 0) {
    AdamOptimizer actor(model.selector.parameters(), {config.learning_rate});
    AdamOptimizer critic(model.predictor.parameters(), {config.learning_rate});
    AdamOptimizer assigner(model.assigner.parameters(), {config.learning_rate});
    AdamOptimizer dictionary({&model.dictionary.centroids}, {config.learning_rate});
    UserBatcher batcher(train.users(), config.batch_size, rng);
    detail::EarlyStopper stopper(config.min_epochs, config.lookback, 1);
    std::vector<Matrix> best = detail::snapshot(step_params);
    DualState best_dual = result.dual;
    double epoch_reach = 0.0, epoch_spend = 0.0, epoch_slack = 0.0;
    std::size_t epoch_batches = 0;

    for (std::size_t it = 1; it <= config.joint_iterations; ++it) {
      const std::size_t epochs_before = batcher.epochs();
      const EncodedUsers batch = gather_users(train, batcher.next());

      // Discovery: π, sampled clusters and centroid predictions.
      Head::Tape selector_tape;
      const Matrix pi = model.selector.forward(batch.z, true, rng, &selector_tape);
      const std::vector<std::size_t> clusters = detail::sample_clusters(pi, rng);
      Head::Tape predictor_tape;
      const std::vector<double> centroid = detail::column(
          model.predictor.forward(model.dictionary.centroids.value, true, rng, &predictor_tape));
      const CentroidPredictionLoss l1 =
          loss_centroid_prediction(batch.labels, clusters, centroid, pi, batch.offsets);
      const LossWithGrad l2 = loss_entropy(pi, batch.offsets);
      const double l3 = loss_separation(centroid).value;
      detail::require_finite(l1.value, stage, "L1", it);

      // Delivery: Beh2Stat on the centroids, expected rates, medium assignment.
      SegmentProfile profile;
      profile.static_distributions = model.beh2stat.forward(model.dictionary.centroids.value);
      for (std::size_t k = 0; k < profile.static_distributions.rows(); ++k) {
        profile.rates.push_back(expected_rates(profile.static_distributions.row(k), table));
      }
      Head::Tape assigner_tape;
      const Matrix assignment =
          model.assigner.forward(profile.static_distributions, true, rng, &assigner_tape);
      const double scale = econ.population / static_cast<double>(batch.z.rows());
      const ProjectedObjective reach_obj =
          evaluate_with_projection(soft_segments(pi, scale, profile, assignment), econ,
                                   result.dual, config.paper_literal_barrier);
      const ReachObjective& lr = reach_obj.objective;
      detail::require_finite(lr.value, stage, "LR", it);

      // Actor: ψ gets the score-function ℒ₁, αℒ₂ and ℒ_R through the soft sizes.
      Matrix d_pi = l1.d_pi;
      Matrix d_entropy = l2.grad;
      d_entropy *= config.weights.alpha;
      d_pi += d_entropy;
      for (std::size_t r = 0; r < d_pi.rows(); ++r) {
        for (std::size_t i = 0; i < d_pi.cols(); ++i) d_pi(r, i) += lr.d_size[i] * scale;
      }
      model.selector.backward(selector_tape, d_pi);
      actor.step();

      // Critic on ℒ₁.
      model.predictor.backward(predictor_tape,
                               Matrix(centroid.size(), 1, l1.d_centroid_predictions));
      critic.step();

      // Medium assigner on ℒ_R.
      model.assigner.backward(assigner_tape, lr.d_assignment);
      detail::zero_grads(model.beh2stat.parameters());
      assigner.step();

      detail::dictionary_step(model, batch.labels, clusters, pi, batch.offsets,
                              config.weights.beta, rng, dictionary);

      const JointLoss l4 = loss_joint(l1.value, l2.value, lr.value, config.weights);
      trace.add(stage, it, "L1", "train", l1.value);
      trace.add(stage, it, "L2", "train", l2.value);
      trace.add(stage, it, "L3", "train", l3);
      trace.add(stage, it, "L4", "train", l4.total());
      result.stage.iterations = it;

      epoch_reach += lr.reach;
      epoch_spend += lr.spend;
      epoch_slack += lr.slack;
      ++epoch_batches;
      if (batcher.epochs() != epochs_before) {
        const double n = static_cast<double>(epoch_batches);
        trace.add(stage, it, "reach", "train", epoch_reach / n);
        trace.add(stage, it, "spend", "train", epoch_spend / n);
        trace.add(stage, it, "slack", "train", epoch_slack / n);
        result.dual = dual_update(result.dual, epoch_slack / n, econ.budget);
        floor_weight(result.dual);
        trace.add(stage, it, "dual_w", "train", result.dual.w);
        trace.add(stage, it, "dual_lambda", "train", result.dual.lambda);
        epoch_reach = epoch_spend = epoch_slack = 0.0;
        epoch_batches = 0;
      }
      result.stage.epochs = batcher.epochs();

      if (val.users() > 0) {
        const detail::DiscoveryLosses v = detail::validation_discovery_losses(model, val);
        const SegmentProfile vp = profile_segments(model, table);
        const Matrix vpi = model.selector.forward(val.z);
        const double vscale = econ.population / static_cast<double>(val.z.rows());
        const ProjectedObjective vlr = evaluate_with_projection(
            soft_segments(vpi, vscale, vp, vp.assignment), econ, result.dual,
            config.paper_literal_barrier);
        const double val_l4 = loss_joint(v.l1, v.l2, vlr.objective.value, config.weights).total();
        trace.add(stage, it, "L1", "validation", v.l1);
        trace.add(stage, it, "L2", "validation", v.l2);
        trace.add(stage, it, "L3", "validation", v.l3);
        trace.add(stage, it, "L4", "validation", val_l4);
        const double tracked[] = {val_l4};
        if (stopper.record(tracked)) {
          best = detail::snapshot(step_params);
          best_dual = result.dual;
          result.stage.selected_iteration = it;
        }
        if (stopper.should_stop(result.stage.epochs)) {
          result.stage.stopped_early = true;
          break;
        }
      }
    }
    if (result.stage.stopped_early) {
      detail::restore(step_params, best);
      result.dual = best_dual;
    } else {
      result.stage.selected_iteration = result.stage.iterations;
    }
  }

  // Hard plan over every training user (fitting and validation parts).
  const SegmentProfile profile = profile_segments(model, table);
  const Matrix all_z = concat_rows(train.z, val.z);
  result.plan = harden_plan(hard_segments(model, profile, all_z), econ);
  model.stages.joint_trained = true;
  return result;
}

}  // namespace reachseg

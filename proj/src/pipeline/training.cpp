#include "reachseg/pipeline/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "reachseg/errors.hpp"
#include "reachseg/pipeline/training_detail.hpp"

namespace reachseg {

void TrainConfig::validate() const {
  if (clusters == 0 || batch_size == 0) {
    throw std::invalid_argument("TrainConfig: clusters and batch size must be positive");
  }
  if (!(learning_rate > 0.0) || !(beh2stat_learning_rate > 0.0)) {
    throw std::invalid_argument("TrainConfig: learning rates must be positive");
  }
  if (lookback == 0 || lookback > min_epochs) {
    throw std::invalid_argument("TrainConfig: need 1 <= lookback <= min_epochs");
  }
  if (weights.alpha < 0.0 || weights.beta < 0.0) {
    throw std::invalid_argument("TrainConfig: α and β must be non-negative");
  }
  if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
    throw std::invalid_argument("TrainConfig: validation fraction must be in [0, 1)");
  }
  if (!(min_dual_weight > 0.0)) throw std::invalid_argument("TrainConfig: min_dual_weight > 0");
}

DataSplit split_validation(std::span<const UserRecord> users, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0) {
    throw std::invalid_argument("split_validation: fraction must be in [0, 1)");
  }
  std::vector<std::size_t> order(users.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = detail::stage_rng(seed, detail::kSaltSplit);
  std::shuffle(order.begin(), order.end(), rng);
  const auto held_out = static_cast<std::size_t>(std::floor(fraction * users.size()));
  std::vector<std::size_t> validation(order.begin(), order.begin() + held_out);
  std::vector<std::size_t> train(order.begin() + held_out, order.end());
  std::sort(validation.begin(), validation.end());
  std::sort(train.begin(), train.end());
  DataSplit split;
  for (std::size_t i : train) split.train.push_back(&users[i]);
  for (std::size_t i : validation) split.validation.push_back(&users[i]);
  return split;
}

std::size_t prefix_count(std::span<const UserRecord> users) {
  std::size_t n = 0;
  for (const UserRecord& u : users) n += u.sessions.size();
  return n;
}

EncodedUsers encode_users(const HanEncoder& encoder, const UserBatch& users) {
  constexpr std::size_t kChunk = 256;
  EncodedUsers out;
  out.offsets = prefix_offsets(users);
  out.z = Matrix(out.offsets.back(), encoder.config().hidden_dim);
  out.labels = detail::labels_of(users);
  for (std::size_t begin = 0; begin < users.size(); begin += kChunk) {
    const std::size_t end = std::min(users.size(), begin + kChunk);
    const UserBatch chunk(users.begin() + begin, users.begin() + end);
    const Matrix z = encoder.encode(chunk);
    std::copy(z.values().begin(), z.values().end(),
              out.z.values().begin() + out.offsets[begin] * out.z.cols());
  }
  return out;
}

EncodedUsers gather_users(const EncodedUsers& all, std::span<const std::size_t> user_indices) {
  EncodedUsers out;
  out.offsets.push_back(0);
  std::vector<std::size_t> rows;
  for (std::size_t u : user_indices) {
    if (u + 1 >= all.offsets.size()) throw std::out_of_range("gather_users: user index");
    for (std::size_t r = all.offsets[u]; r < all.offsets[u + 1]; ++r) {
      rows.push_back(r);
      out.labels.push_back(all.labels[r]);
    }
    out.offsets.push_back(rows.size());
  }
  out.z = gather_rows(all.z, rows);
  return out;
}

UserBatcher::UserBatcher(std::size_t users, std::size_t batch_size, Rng& rng)
    : order_(users), batch_size_(batch_size), rng_(&rng) {
  if (users == 0) throw std::invalid_argument("UserBatcher: no users");
  if (batch_size == 0) throw std::invalid_argument("UserBatcher: batch size 0");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), *rng_);
}

std::vector<std::size_t> UserBatcher::next() {
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  std::vector<std::size_t> batch(order_.begin() + cursor_, order_.begin() + end);
  cursor_ = end;
  if (cursor_ == order_.size()) {
    cursor_ = 0;
    ++epochs_;
    std::shuffle(order_.begin(), order_.end(), *rng_);
  }
  return batch;
}

namespace detail {

Rng stage_rng(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  return Rng(seq);
}

std::vector<int> labels_of(const UserBatch& users) {
  std::vector<int> labels;
  for (const UserRecord* u : users) labels.insert(labels.end(), u->labels.begin(), u->labels.end());
  return labels;
}

UserBatch pick(const UserBatch& users, std::span<const std::size_t> indices) {
  UserBatch out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(users[i]);
  return out;
}

std::vector<Parameter*> concat(std::initializer_list<std::vector<Parameter*>> groups) {
  std::vector<Parameter*> out;
  for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  return out;
}

std::vector<Matrix> snapshot(const std::vector<Parameter*>& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(const std::vector<Parameter*>& params, const std::vector<Matrix>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

void zero_grads(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->zero_grad();
}

void require_finite(double value, const std::string& stage, const std::string& loss,
                    std::size_t iteration) {
  if (!std::isfinite(value)) {
    throw NumericError(stage + ": " + loss + " became non-finite at iteration " +
                       std::to_string(iteration));
  }
}

std::vector<double> column(const Matrix& m) {
  return std::vector<double>(m.values().begin(), m.values().end());
}

std::vector<std::size_t> sample_clusters(const Matrix& pi, Rng& rng) {
  std::vector<std::size_t> out(pi.rows());
  for (std::size_t r = 0; r < pi.rows(); ++r) out[r] = sample_cluster(pi.row(r), rng);
  return out;
}

double expected_centroid_loss(const Matrix& pi, std::span<const double> centroid_predictions,
                              std::span<const int> labels, std::span<const std::size_t> offsets) {
  double total = 0.0;
  for (std::size_t r = 0; r < pi.rows(); ++r) {
    for (std::size_t k = 0; k < pi.cols(); ++k) {
      total += pi(r, k) * binary_cross_entropy(labels[r], centroid_predictions[k]).value;
    }
  }
  return total / static_cast<double>(offsets.size() - 1);
}

DiscoveryLosses validation_discovery_losses(const SegmentationModel& model,
                                            const EncodedUsers& users) {
  DiscoveryLosses out;
  const std::vector<double> centroid = column(model.predictor.forward(model.dictionary.centroids.value));
  out.l3 = loss_separation(centroid).value;
  if (users.users() == 0) return out;
  const Matrix pi = model.selector.forward(users.z);
  out.l1 = expected_centroid_loss(pi, centroid, users.labels, users.offsets);
  out.l2 = loss_entropy(pi, users.offsets).value;
  return out;
}

void dictionary_step(SegmentationModel& model, std::span<const int> labels,
                     std::span<const std::size_t> clusters, const Matrix& pi,
                     std::span<const std::size_t> offsets, double beta, Rng& rng,
                     AdamOptimizer& dictionary_optimizer) {
  Head::Tape tape;
  const Matrix predictions = model.predictor.forward(model.dictionary.centroids.value, true, rng, &tape);
  const std::vector<double> centroid = column(predictions);
  const CentroidPredictionLoss l1 = loss_centroid_prediction(labels, clusters, centroid, pi, offsets);
  const SeparationLoss l3 = loss_separation(centroid);
  Matrix d_predictions(centroid.size(), 1);
  for (std::size_t k = 0; k < centroid.size(); ++k) {
    d_predictions[k] = l1.d_centroid_predictions[k] + beta * l3.grad[k];
  }
  const Matrix d_centroids = model.predictor.backward(tape, d_predictions);
  model.dictionary.centroids.grad += d_centroids;
  zero_grads(model.predictor.parameters());
  dictionary_optimizer.step();
}

EarlyStopper::EarlyStopper(std::size_t min_epochs, std::size_t lookback, std::size_t tracked)
    : min_epochs_(min_epochs),
      lookback_(lookback),
      best_(tracked, std::numeric_limits<double>::infinity()),
      last_improvement_(tracked, 0) {}

bool EarlyStopper::record(std::span<const double> losses) {
  if (losses.size() != best_.size()) throw std::invalid_argument("EarlyStopper: loss count");
  bool primary_improved = false;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (losses[i] < best_[i]) {
      best_[i] = losses[i];
      last_improvement_[i] = evaluations_;
      if (i == 0) primary_improved = true;
    }
  }
  ++evaluations_;
  return primary_improved;
}

bool EarlyStopper::should_stop(std::size_t epochs) const {
  if (epochs < min_epochs_ || evaluations_ == 0) return false;
  for (std::size_t i = 0; i < best_.size(); ++i) {
    if (evaluations_ - 1 - last_improvement_[i] < lookback_) return false;
  }
  return true;
}

}  // namespace detail

StageResult pretrain_encoder_predictor(SegmentationModel& model, const DataSplit& data,
                                       const TrainConfig& config, ConvergenceTrace& trace) {
  config.validate();
  const std::string stage = "pretrain";
  Rng rng = detail::stage_rng(config.seed, detail::kSaltPretrain);
  StageResult result;
  if (config.pretrain_iterations > 0) {
    AdamOptimizer optimizer(
        detail::concat({model.encoder.parameters(), model.predictor.parameters()}),
        {config.learning_rate});
    UserBatcher batcher(data.train.size(), config.batch_size, rng);
    for (std::size_t it = 1; it <= config.pretrain_iterations; ++it) {
      const UserBatch batch = detail::pick(data.train, batcher.next());
      const std::vector<std::size_t> offsets = prefix_offsets(batch);
      const std::vector<int> labels = detail::labels_of(batch);
      HanEncoder::Tape encoder_tape;
      const Matrix z = model.encoder.encode(batch, &encoder_tape);
      Head::Tape head_tape;
      const Matrix predictions = model.predictor.forward(z, true, rng, &head_tape);
      const LossWithGrad loss = loss_pretrain(predictions, labels, offsets);
      detail::require_finite(loss.value, stage, "L1", it);
      model.encoder.backward(encoder_tape, model.predictor.backward(head_tape, loss.grad));
      optimizer.step();
      trace.add(stage, it, "L1", "train", loss.value);
      if (!data.validation.empty()) {
        const Matrix zv = model.encoder.encode(data.validation);
        const double val = loss_pretrain(model.predictor.forward(zv),
                                         detail::labels_of(data.validation),
                                         prefix_offsets(data.validation))
                               .value;
        trace.add(stage, it, "L1", "validation", val);
      }
      result.iterations = it;
    }
    result.epochs = batcher.epochs();
    result.selected_iteration = result.iterations;
  }
  model.stages.encoder_pretrained = true;
  return result;
}

KMeansResult init_clusters(SegmentationModel& model, const Matrix& embeddings,
                           const TrainConfig& config) {
  if (!model.stages.encoder_pretrained) {
    throw InvalidState("init_clusters: encoder has not been pre-trained");
  }
  if (config.clusters != model.config.clusters) {
    throw std::invalid_argument("init_clusters: config K differs from the model's K");
  }
  KMeansResult result = kmeans(embeddings, config.clusters,
                               config.seed ^ detail::kSaltKMeans, config.kmeans_max_iterations,
                               config.kmeans_tolerance);
  model.dictionary.centroids.value = result.centroids;
  model.dictionary.centroids.zero_grad();
  model.stages.clusters_initialized = true;
  return result;
}

StageResult pretrain_selector(SegmentationModel& model, const Matrix& embeddings,
                              std::span<const std::size_t> labels, const TrainConfig& config,
                              ConvergenceTrace& trace) {
  if (!model.stages.clusters_initialized) {
    throw InvalidState("pretrain_selector: clusters have not been initialized");
  }
  if (labels.size() != embeddings.rows()) {
    throw std::invalid_argument("pretrain_selector: one label per embedding required");
  }
  const std::string stage = "selector";
  Rng rng = detail::stage_rng(config.seed, detail::kSaltSelector);
  StageResult result;
  if (config.selector_iterations > 0 && embeddings.rows() > 0) {
    AdamOptimizer optimizer(model.selector.parameters(), {config.learning_rate});
    UserBatcher batcher(embeddings.rows(), config.batch_size, rng);
    for (std::size_t it = 1; it <= config.selector_iterations; ++it) {
      const std::vector<std::size_t> rows = batcher.next();
      const Matrix z = gather_rows(embeddings, rows);
      Head::Tape tape;
      const Matrix pi = model.selector.forward(z, true, rng, &tape);
      Matrix d_pi(pi.rows(), pi.cols());
      double loss = 0.0;
      const double n = static_cast<double>(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::size_t k = labels[rows[r]];
        const double p = std::max(pi(r, k), kProbabilityFloor);
        loss -= std::log(p);
        d_pi(r, k) = -1.0 / (p * n);
      }
      loss /= n;
      detail::require_finite(loss, stage, "CE", it);
      model.selector.backward(tape, d_pi);
      optimizer.step();
      trace.add(stage, it, "CE", "train", loss);
      result.iterations = it;
    }
    result.epochs = batcher.epochs();
    result.selected_iteration = result.iterations;
  }
  model.stages.selector_pretrained = true;
  return result;
}

void run_pretraining(SegmentationModel& model, const DataSplit& data, const TrainConfig& config,
                     ConvergenceTrace& trace) {
  pretrain_encoder_predictor(model, data, config, trace);
  const EncodedUsers encoded = encode_users(model.encoder, data.train);
  const KMeansResult clusters = init_clusters(model, encoded.z, config);
  pretrain_selector(model, encoded.z, clusters.labels, config, trace);
}

StageResult train_actor_critic(SegmentationModel& model, const DataSplit& data,
                               const TrainConfig& config, ConvergenceTrace& trace) {
  config.validate();
  if (!model.stages.encoder_pretrained || !model.stages.clusters_initialized ||
      !model.stages.selector_pretrained) {
    throw InvalidState("train_actor_critic: pre-training (stage 1) has not completed");
  }
  const std::string stage = "actor_critic";
  Rng rng = detail::stage_rng(config.seed, detail::kSaltActorCritic);
  StageResult result;
  if (config.actor_critic_iterations == 0) {
    model.stages.actor_critic_trained = true;
    return result;
  }
  const std::vector<Parameter*> actor_params =
      detail::concat({model.encoder.parameters(), model.selector.parameters()});
  const std::vector<Parameter*> critic_params = model.predictor.parameters();
  const std::vector<Parameter*> all_params =
      detail::concat({actor_params, critic_params, {&model.dictionary.centroids}});
  AdamOptimizer actor(actor_params, {config.learning_rate});
  AdamOptimizer critic(critic_params, {config.learning_rate});
  AdamOptimizer dictionary({&model.dictionary.centroids}, {config.learning_rate});
  UserBatcher batcher(data.train.size(), config.batch_size, rng);
  detail::EarlyStopper stopper(config.min_epochs, config.lookback, 3);
  std::vector<Matrix> best = detail::snapshot(all_params);
  double initial_loss = 0.0;
  std::size_t diverging = 0;

  for (std::size_t it = 1; it <= config.actor_critic_iterations; ++it) {
    const UserBatch batch = detail::pick(data.train, batcher.next());
    const std::vector<std::size_t> offsets = prefix_offsets(batch);
    const std::vector<int> labels = detail::labels_of(batch);

    HanEncoder::Tape encoder_tape;
    const Matrix z = model.encoder.encode(batch, &encoder_tape);
    Head::Tape selector_tape;
    const Matrix pi = model.selector.forward(z, true, rng, &selector_tape);
    const std::vector<std::size_t> clusters = detail::sample_clusters(pi, rng);
    Head::Tape predictor_tape;
    const std::vector<double> centroid = detail::column(
        model.predictor.forward(model.dictionary.centroids.value, true, rng, &predictor_tape));
    const CentroidPredictionLoss l1 =
        loss_centroid_prediction(labels, clusters, centroid, pi, offsets);
    const LossWithGrad l2 = loss_entropy(pi, offsets);
    const double l3 = loss_separation(centroid).value;
    detail::require_finite(l1.value, stage, "L1", it);

    // Actor: score-function ℒ₁ plus αℒ₂ into ψ and θ.
    Matrix d_pi = l1.d_pi;
    Matrix d_entropy = l2.grad;
    d_entropy *= config.weights.alpha;
    d_pi += d_entropy;
    model.encoder.backward(encoder_tape, model.selector.backward(selector_tape, d_pi));
    actor.step();

    // Critic: ℒ₁ into φ.
    Matrix d_centroid(centroid.size(), 1, l1.d_centroid_predictions);
    model.predictor.backward(predictor_tape, d_centroid);
    model.dictionary.centroids.zero_grad();
    critic.step();

    // Dictionary: ℒ_E = ℒ₁ + βℒ₃ into ℰ.
    detail::dictionary_step(model, labels, clusters, pi, offsets, config.weights.beta, rng,
                            dictionary);

    trace.add(stage, it, "L1", "train", l1.value);
    trace.add(stage, it, "L2", "train", l2.value);
    trace.add(stage, it, "L3", "train", l3);
    result.iterations = it;
    result.epochs = batcher.epochs();

    if (it == 1) initial_loss = l1.value;
    diverging = l1.value > config.divergence_factor * initial_loss ? diverging + 1 : 0;
    if (diverging >= config.divergence_window) {
      throw NumericError("actor_critic: loss above " + format_double(config.divergence_factor) +
                         "x its initial value for " + std::to_string(diverging) +
                         " iterations; training diverged");
    }

    if (!data.validation.empty()) {
      const EncodedUsers val = encode_users(model.encoder, data.validation);
      const detail::DiscoveryLosses v = detail::validation_discovery_losses(model, val);
      trace.add(stage, it, "L1", "validation", v.l1);
      trace.add(stage, it, "L2", "validation", v.l2);
      trace.add(stage, it, "L3", "validation", v.l3);
      const double tracked[] = {v.l1, v.l2, v.l3};
      if (stopper.record(tracked)) {
        best = detail::snapshot(all_params);
        result.selected_iteration = it;
      }
      if (stopper.should_stop(result.epochs)) {
        result.stopped_early = true;
        break;
      }
    }
  }
  if (result.stopped_early) {
    detail::restore(all_params, best);
  } else {
    result.selected_iteration = result.iterations;
  }
  model.stages.actor_critic_trained = true;
  return result;
}

StageResult train_beh2stat(SegmentationModel& model, const DataSplit& data,
                           const TrainConfig& config, ConvergenceTrace& trace) {
  if (!model.stages.encoder_pretrained) {
    throw InvalidState("train_beh2stat: encoder has not been trained");
  }
  const std::string stage = "beh2stat";
  Rng rng = detail::stage_rng(config.seed, detail::kSaltBeh2Stat);
  const std::vector<std::size_t> class_counts = model.config.static_classes;
  const auto static_rows = [&](const UserBatch& users) {
    std::vector<std::vector<std::size_t>> rows;
    for (const UserRecord* u : users) {
      if (u->static_classes.size() != class_counts.size()) {
        throw std::invalid_argument("train_beh2stat: user static tuple does not match the schema");
      }
      const std::vector<std::size_t> s(u->static_classes.begin(), u->static_classes.end());
      for (std::size_t t = 0; t < u->sessions.size(); ++t) rows.push_back(s);
    }
    return rows;
  };
  const EncodedUsers train = encode_users(model.encoder, data.train);
  const std::vector<std::vector<std::size_t>> train_static = static_rows(data.train);
  EncodedUsers val;
  std::vector<std::vector<std::size_t>> val_static;
  if (!data.validation.empty()) {
    val = encode_users(model.encoder, data.validation);
    val_static = static_rows(data.validation);
  }

  StageResult result;
  if (config.beh2stat_iterations > 0 && train.z.rows() > 0) {
    const std::vector<Parameter*> params = model.beh2stat.parameters();
    AdamOptimizer optimizer(params, {config.beh2stat_learning_rate});
    UserBatcher batcher(train.z.rows(), config.batch_size, rng);
    std::vector<Matrix> best;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= config.beh2stat_iterations; ++it) {
      const std::vector<std::size_t> rows = batcher.next();
      std::vector<std::vector<std::size_t>> targets;
      targets.reserve(rows.size());
      for (std::size_t r : rows) targets.push_back(train_static[r]);
      Head::Tape tape;
      const Matrix p = model.beh2stat.forward(gather_rows(train.z, rows), true, rng, &tape);
      const LossWithGrad loss = loss_beh2stat(p, targets, class_counts);
      detail::require_finite(loss.value, stage, "LB", it);
      model.beh2stat.backward(tape, loss.grad);
      optimizer.step();
      trace.add(stage, it, "LB", "train", loss.value);
      result.iterations = it;
      if (!val_static.empty()) {
        const double v = loss_beh2stat(model.beh2stat.forward(val.z), val_static, class_counts).value;
        trace.add(stage, it, "LB", "validation", v);
        if (config.beh2stat_select_best && v < best_loss) {
          best_loss = v;
          best = detail::snapshot(params);
          result.selected_iteration = it;
        }
      }
    }
    result.epochs = batcher.epochs();
    if (best.empty()) {
      result.selected_iteration = result.iterations;
    } else {
      detail::restore(params, best);
    }
  }
  model.stages.beh2stat_trained = true;
  return result;
}

}  // namespace reachseg

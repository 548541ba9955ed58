#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "reachseg/errors.hpp"
#include "reachseg/evaluation/evaluate.hpp"
#include "reachseg/pipeline/training.hpp"
#include "reachseg/pipeline/training_detail.hpp"
#include "test_util.hpp"

namespace reachseg {
namespace {

using testing::random_matrix;

TEST(Trace, RejectsNonFiniteAndBackwardsIterations) {
  ConvergenceTrace t;
  t.add("stage1", 1, "L1", "train", 0.5);
  t.add("stage1", 2, "L1", "train", 0.4);
  t.add("stage1", 1, "L1", "validation", 0.6);
  EXPECT_THROW(t.add("stage1", 3, "L1", "train", std::numeric_limits<double>::quiet_NaN()), NumericError);
  EXPECT_THROW(t.add("stage1", 4, "L1", "train", INFINITY), NumericError);
  EXPECT_THROW(t.add("stage1", 1, "L1", "train", 0.3), std::invalid_argument);
  EXPECT_EQ(t.count("stage1", "L1", "train"), 2u);
  EXPECT_EQ(t.series("stage1", "L1", "train"), (std::vector<double>{0.5, 0.4}));
  EXPECT_TRUE(t.has_stage("stage1"));
  EXPECT_FALSE(t.has_stage("stage3"));
}

TEST(Trace, CsvLayout) {
  ConvergenceTrace t;
  t.add("stage3", 1, "reach", "epoch", 0.1);
  ConvergenceTrace other;
  other.add("beh2stat", 5, "L_S", "train", 2.0);
  t.append(other);
  EXPECT_EQ(t.to_csv(),
            "stage,iteration,loss_name,split,value\n"
            "stage3,1,reach,epoch,0.10000000000000001\n"
            "beh2stat,5,L_S,train,2\n");
}

TEST(EarlyStopper, WaitsForMinEpochsAndEveryLoss) {
  detail::EarlyStopper s(3, 2, 2);
  EXPECT_TRUE(s.record(std::vector<double>{1.0, 1.0}));
  EXPECT_FALSE(s.record(std::vector<double>{1.5, 0.5}));
  EXPECT_FALSE(s.should_stop(5));  // second loss just improved
  EXPECT_FALSE(s.record(std::vector<double>{1.5, 0.6}));
  EXPECT_FALSE(s.record(std::vector<double>{1.5, 0.6}));
  EXPECT_FALSE(s.should_stop(2));  // before min_epochs
  EXPECT_TRUE(s.should_stop(3));
  EXPECT_TRUE(s.record(std::vector<double>{0.9, 0.6}));
  EXPECT_FALSE(s.should_stop(10));
}

Matrix blobs(std::size_t per, Rng& rng, std::vector<std::size_t>& truth) {
  const double centres[3][2] = {{0, 0}, {10, 0}, {0, 10}};
  std::normal_distribution<double> noise(0.0, 0.5);
  Matrix m(3 * per, 2);
  truth.clear();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < per; ++i) {
      m(c * per + i, 0) = centres[c][0] + noise(rng);
      m(c * per + i, 1) = centres[c][1] + noise(rng);
      truth.push_back(c);
    }
  }
  return m;
}

TEST(KMeans, RecoversSeparatedBlobs) {
  Rng rng(60);
  std::vector<std::size_t> truth;
  const Matrix pts = blobs(50, rng, truth);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const KMeansResult r = kmeans(pts, 3, seed);
    // labels agree with the generating blobs up to a permutation
    for (std::size_t c = 0; c < 3; ++c) {
      std::set<std::size_t> seen;
      for (std::size_t i = 0; i < pts.rows(); ++i) if (truth[i] == c) seen.insert(r.labels[i]);
      EXPECT_EQ(seen.size(), 1u);
    }
    std::set<std::size_t> used(r.labels.begin(), r.labels.end());
    EXPECT_EQ(used.size(), 3u);
    EXPECT_LE(r.iterations, 100u);
  }
  const KMeansResult a = kmeans(pts, 3, 5), b = kmeans(pts, 3, 5);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_TRUE(std::ranges::equal(a.centroids.values(), b.centroids.values()));
}

TEST(KMeans, CentroidsAreClusterMeans) {
  Rng rng(61);
  const Matrix pts = random_matrix(200, 3, rng);
  const KMeansResult r = kmeans(pts, 4, 1, 1000, 0.0);
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<double> mean(3, 0.0);
    double n = 0;
    for (std::size_t i = 0; i < pts.rows(); ++i) {
      if (r.labels[i] != k) continue;
      for (std::size_t c = 0; c < 3; ++c) mean[c] += pts(i, c);
      n += 1;
    }
    ASSERT_GT(n, 0);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(r.centroids(k, c), mean[c] / n, 1e-9);
  }
}

TEST(KMeans, TooFewDistinctPoints) {
  Matrix pts(10, 2, 1.0);
  pts(3, 0) = 2.0;
  EXPECT_THROW(kmeans(pts, 3, 0), InvalidState);
  EXPECT_NO_THROW(kmeans(pts, 2, 0));
  EXPECT_THROW(kmeans(pts, 0, 0), std::invalid_argument);
}

std::vector<UserRecord> small_users(std::size_t n, std::uint64_t seed) {
  GeneratorConfig c = GeneratorConfig::preset("tiny");
  c.seed = seed;
  Dataset d = generate_dataset(c);
  d.train.resize(n);
  return d.train;
}

TEST(Split, DeterministicAndDisjoint) {
  const auto users = small_users(100, 3);
  const DataSplit a = split_validation(users, 0.1, 7);
  const DataSplit b = split_validation(users, 0.1, 7);
  const DataSplit c = split_validation(users, 0.1, 8);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_NE(a.validation, c.validation);
  EXPECT_EQ(a.validation.size(), 10u);
  EXPECT_EQ(a.train.size() + a.validation.size(), 100u);
  std::set<const UserRecord*> all(a.train.begin(), a.train.end());
  all.insert(a.validation.begin(), a.validation.end());
  EXPECT_EQ(all.size(), 100u);
}

TEST(Batcher, EveryEpochVisitsEveryUserOnce) {
  Rng rng(62);
  UserBatcher b(10, 4, rng);
  std::vector<std::size_t> seen;
  while (b.epochs() < 3) {
    const auto batch = b.next();
    EXPECT_FALSE(batch.empty());
    EXPECT_LE(batch.size(), 4u);
    seen.insert(seen.end(), batch.begin(), batch.end());
  }
  ASSERT_EQ(seen.size(), 30u);
  for (int e = 0; e < 3; ++e) {
    std::vector<std::size_t> epoch(seen.begin() + 10 * e, seen.begin() + 10 * (e + 1));
    std::sort(epoch.begin(), epoch.end());
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(epoch[i], i);
  }
}

struct Fixture {
  std::vector<UserRecord> users;
  DataSplit split;
  MediaTable table;
  MediaEconomics econ;
  TrainConfig config;
  ModelConfig model_config;
};

Fixture make_fixture(std::size_t k) {
  Fixture f;
  const GeneratorConfig gc = GeneratorConfig::preset("tiny");
  f.users = small_users(120, gc.seed);
  f.split = split_validation(f.users, 0.2, 1);
  f.table = generate_media_table(gc.schema, 7);
  f.econ.costs = f.table.costs;
  f.econ.population = static_cast<double>(prefix_count(f.users));
  f.econ.budget = 0.3 * f.econ.population * 0.25 * 50;
  f.config.clusters = k;
  f.config.batch_size = 32;
  f.config.pretrain_iterations = 40;
  f.config.selector_iterations = 60;
  f.config.actor_critic_iterations = 30;
  f.config.beh2stat_iterations = 30;
  f.config.joint_iterations = 30;
  f.config.min_epochs = 3;
  f.config.lookback = 3;
  f.config.seed = 11;
  f.model_config.encoder.vocabulary_size = gc.vocabulary_size;
  f.model_config.encoder.embed_dim = 8;
  f.model_config.encoder.hidden_dim = 8;
  f.model_config.clusters = k;
  f.model_config.beh2stat_width = 16;
  f.model_config.beh2stat_depth = 2;
  f.model_config.assigner_width = 8;
  f.model_config.static_classes = gc.schema.class_counts();
  f.model_config.media = gc.schema.media_count;
  return f;
}

TEST(Stages, OrderIsEnforced) {
  Fixture f = make_fixture(3);
  Rng rng(63);
  SegmentationModel m(f.model_config, rng);
  ConvergenceTrace trace;
  const Matrix z = random_matrix(30, 8, rng);
  EXPECT_THROW(init_clusters(m, z, f.config), InvalidState);
  EXPECT_THROW(train_actor_critic(m, f.split, f.config, trace), InvalidState);
  EXPECT_THROW(train_beh2stat(m, f.split, f.config, trace), InvalidState);
  EXPECT_THROW(train_joint(m, f.split, f.table, f.econ, f.config, trace), InvalidState);
  pretrain_encoder_predictor(m, f.split, f.config, trace);
  const std::vector<std::size_t> labels(30, 0);
  EXPECT_THROW(pretrain_selector(m, z, labels, f.config, trace), InvalidState);
  init_clusters(m, encode_users(m.encoder, f.split.train).z, f.config);
  EXPECT_THROW(train_actor_critic(m, f.split, f.config, trace), InvalidState);
}

TEST(Stages, SelectorLearnsKMeansLabels) {
  Fixture f = make_fixture(3);
  f.config.selector_iterations = 400;
  Rng rng(64);
  SegmentationModel m(f.model_config, rng);
  ConvergenceTrace trace;
  pretrain_encoder_predictor(m, f.split, f.config, trace);
  const Matrix z = encode_users(m.encoder, f.split.train).z;
  const KMeansResult km = init_clusters(m, z, f.config);
  EXPECT_TRUE(std::ranges::equal(m.dictionary.centroids.value.values(), km.centroids.values()));
  pretrain_selector(m, z, km.labels, f.config, trace);
  const auto predicted = hard_clusters(m, z);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) agree += predicted[i] == km.labels[i];
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(predicted.size()), 0.8);
  EXPECT_EQ(trace.count("selector", "CE", "train"), 400u);
}

TEST(Beh2Stat, KeepsBestValidationIteration) {
  Fixture f = make_fixture(3);
  f.config.beh2stat_iterations = 60;
  Rng rng(65);
  SegmentationModel m(f.model_config, rng);
  ConvergenceTrace trace;
  pretrain_encoder_predictor(m, f.split, f.config, trace);
  const StageResult r = train_beh2stat(m, f.split, f.config, trace);
  const auto val = trace.series("beh2stat", "LB", "validation");
  ASSERT_EQ(val.size(), 60u);
  const std::size_t best = static_cast<std::size_t>(std::min_element(val.begin(), val.end()) - val.begin());
  EXPECT_EQ(r.selected_iteration, best + 1);

  const EncodedUsers enc = encode_users(m.encoder, f.split.validation);
  std::vector<std::vector<std::size_t>> targets;
  for (const UserRecord* u : f.split.validation) {
    for (std::size_t t = 0; t < u->sessions.size(); ++t) {
      targets.emplace_back(u->static_classes.begin(), u->static_classes.end());
    }
  }
  const double restored =
      loss_beh2stat(m.beh2stat.forward(enc.z), targets, f.model_config.static_classes).value;
  EXPECT_DOUBLE_EQ(restored, val[best]);
}

TEST(Beh2Stat, ConstantFeatureIsLearnedExactly) {
  Fixture f = make_fixture(2);
  for (UserRecord& u : f.users) u.static_classes[1] = 1;
  f.split = split_validation(f.users, 0.2, 1);
  f.config.beh2stat_iterations = 150;
  Rng rng(66);
  SegmentationModel m(f.model_config, rng);
  ConvergenceTrace trace;
  pretrain_encoder_predictor(m, f.split, f.config, trace);
  train_beh2stat(m, f.split, f.config, trace);
  const StaticSchema schema = GeneratorConfig::preset("tiny").schema;
  const auto acc = beh2stat_accuracy(m, schema, f.split.validation);
  EXPECT_EQ(acc[1].accuracy, 1.0);
}

struct RunOutput {
  std::string trace_csv;
  std::string checkpoint;
  JointResult joint;
};

RunOutput run_all(const Fixture& f, bool ablate) {
  TrainConfig config = f.config;
  config.ablate_step2 = ablate;
  Rng rng(config.seed);
  SegmentationModel m(f.model_config, rng);
  ConvergenceTrace trace;
  run_pretraining(m, f.split, config, trace);
  if (!ablate) train_actor_critic(m, f.split, config, trace);
  train_beh2stat(m, f.split, config, trace);
  RunOutput out;
  out.joint = train_joint(m, f.split, f.table, f.econ, config, trace);
  out.trace_csv = trace.to_csv();
  out.checkpoint = checkpoint_to_json(m);
  EXPECT_TRUE(m.stages.joint_trained);
  return out;
}

TEST(EndToEnd, SameSeedIsIdentical) {
  const Fixture f = make_fixture(3);
  const RunOutput a = run_all(f, false);
  const RunOutput b = run_all(f, false);
  EXPECT_EQ(a.trace_csv, b.trace_csv);
  EXPECT_EQ(a.checkpoint, b.checkpoint);
  EXPECT_EQ(a.joint.plan.media, b.joint.plan.media);
  EXPECT_EQ(a.joint.plan.reach, b.joint.plan.reach);
  EXPECT_NEAR(a.joint.plan.spend + a.joint.plan.slack, f.econ.budget, 1e-12 * f.econ.budget);
  EXPECT_GE(a.joint.plan.reach, 0.0);
  EXPECT_GE(a.joint.dual.lambda, 0.0);
}

TEST(EndToEnd, AblationSkipsStageTwo) {
  const Fixture f = make_fixture(3);
  const RunOutput full = run_all(f, false);
  const RunOutput ablated = run_all(f, true);
  EXPECT_NE(full.trace_csv.find("\nactor_critic,"), std::string::npos);
  EXPECT_EQ(ablated.trace_csv.find("\nactor_critic,"), std::string::npos);
  EXPECT_NE(ablated.trace_csv.find("\njoint,"), std::string::npos);
}

TEST(Plans, HardenAndExplicitMedia) {
  const std::vector<SegmentDelivery> segs{
      {10, {{0.5, 0.5}, {0.6, 0.6}}, {0.9, 0.1}},  // 0.225 vs 0.036 -> medium 0
      {20, {{0.3, 0.3}, {0.7, 0.7}}, {0.5, 0.5}},  // 0.045 vs 0.245 -> medium 1
  };
  const MediaEconomics econ{100.0, 30.0, {2.0, 3.0}};
  const DeliveryPlan p = harden_plan(segs, econ);
  EXPECT_EQ(p.media[0], std::optional<std::size_t>(0));
  EXPECT_EQ(p.media[1], std::optional<std::size_t>(1));
  EXPECT_NEAR(p.reach, 0.25 * 10 + 0.49 * 20, 1e-12);
  EXPECT_NEAR(p.spend, 0.25 * 10 * 2 + 0.49 * 20 * 3, 1e-12);
  EXPECT_NEAR(p.slack, 100.0 - p.spend, 1e-12);
  EXPECT_EQ(p.segments[0].assignment, (std::vector<double>{1.0, 0.0}));

  const std::vector<std::optional<std::size_t>> media{std::nullopt, 0};
  const DeliveryPlan q = plan_with_media(segs, media, econ);
  EXPECT_NEAR(q.reach, 0.09 * 20, 1e-12);
  EXPECT_NEAR(q.spend, 0.09 * 20 * 2, 1e-12);
}

TEST(Plans, ClusterCounts) {
  const std::vector<std::size_t> c{0, 2, 2, 1, 2};
  EXPECT_EQ(cluster_counts(c, 4), (std::vector<double>{1, 1, 3, 0}));
}

}  // namespace
}  // namespace reachseg

#include "reachseg/experiment/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "reachseg/errors.hpp"
#include "reachseg/fileio.hpp"
#include "reachseg/pipeline/training_detail.hpp"

namespace reachseg {

using nlohmann::json;

namespace {

const std::vector<std::pair<ModelTag, std::string>>& tag_names() {
  static const std::vector<std::pair<ModelTag, std::string>> names = {
      {ModelTag::kDiscUc, "disc-uc"},   {ModelTag::kDiscBc, "disc-bc"},
      {ModelTag::kDadCsse, "dad-csse"}, {ModelTag::kDadCase, "dad-case"},
      {ModelTag::kDadSmin, "dad-smin"}, {ModelTag::kDadBarr, "dad-barr"},
      {ModelTag::kDadAlm, "dad-alm"}};
  return names;
}

}  // namespace

ModelTag parse_model_tag(const std::string& tag) {
  for (const auto& [value, name] : tag_names()) {
    if (name == tag) return value;
  }
  throw ConfigError("unknown model '" + tag + "'");
}

std::string model_tag_name(ModelTag tag) {
  for (const auto& [value, name] : tag_names()) {
    if (value == tag) return name;
  }
  return "unknown";
}

bool is_dad(ModelTag tag) { return tag != ModelTag::kDiscUc && tag != ModelTag::kDiscBc; }

Formulation formulation_of(ModelTag tag) {
  switch (tag) {
    case ModelTag::kDadCsse: return Formulation::kCsse;
    case ModelTag::kDadCase: return Formulation::kCase;
    case ModelTag::kDadSmin: return Formulation::kSlack;
    case ModelTag::kDadBarr: return Formulation::kBarrier;
    case ModelTag::kDadAlm: return Formulation::kAlm;
    case ModelTag::kDiscUc:
    case ModelTag::kDiscBc: break;
  }
  throw std::invalid_argument("formulation_of: " + model_tag_name(tag) + " has no formulation");
}

std::vector<ModelTag> all_model_tags() {
  std::vector<ModelTag> out;
  for (const auto& entry : tag_names()) out.push_back(entry.first);
  return out;
}

void ExperimentConfig::validate() const {
  if (models.empty()) throw ConfigError("model list is empty");
  if (ks.empty()) throw ConfigError("K list is empty");
  if (seeds.empty()) throw ConfigError("seed list is empty");
  if (std::set<ModelTag>(models.begin(), models.end()).size() != models.size()) {
    throw ConfigError("model list contains duplicates");
  }
  for (std::size_t k : ks) {
    if (k == 0) throw ConfigError("K must be >= 1");
  }
  if (ablate_step2) {
    for (ModelTag m : models) {
      if (!is_dad(m)) {
        throw ConfigError("--ablate-step2 applies to DAD models only, got " + model_tag_name(m));
      }
    }
  }
  if (!dataset_dir) {
    const auto names = GeneratorConfig::preset_names();
    if (std::find(names.begin(), names.end(), preset) == names.end()) {
      throw ConfigError("unknown preset '" + preset + "'");
    }
  }
  if (budget && !(*budget > 0.0)) throw ConfigError("budget must be positive");
  if (!(budget_fraction > 0.0)) throw ConfigError("budget fraction must be positive");
  for (double c : costs) {
    if (!(c > 0.0)) throw ConfigError("media costs must be positive");
  }
  if (workers == 0) throw ConfigError("workers must be >= 1");
  try {
    TrainConfig probe = train;
    probe.clusters = ks.front();
    probe.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

namespace {

template <typename T>
T get_as(const json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

void apply_train(const json& doc, TrainConfig& t) {
  if (!doc.is_object()) throw ConfigError("config key 'train' must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "batch_size") t.batch_size = get_as<std::size_t>(value, key);
    else if (key == "learning_rate") t.learning_rate = get_as<double>(value, key);
    else if (key == "beh2stat_learning_rate") t.beh2stat_learning_rate = get_as<double>(value, key);
    else if (key == "pretrain_iterations") t.pretrain_iterations = get_as<std::size_t>(value, key);
    else if (key == "selector_iterations") t.selector_iterations = get_as<std::size_t>(value, key);
    else if (key == "actor_critic_iterations") t.actor_critic_iterations = get_as<std::size_t>(value, key);
    else if (key == "beh2stat_iterations") t.beh2stat_iterations = get_as<std::size_t>(value, key);
    else if (key == "joint_iterations") t.joint_iterations = get_as<std::size_t>(value, key);
    else if (key == "min_epochs") t.min_epochs = get_as<std::size_t>(value, key);
    else if (key == "lookback") t.lookback = get_as<std::size_t>(value, key);
    else if (key == "alpha") t.weights.alpha = get_as<double>(value, key);
    else if (key == "beta") t.weights.beta = get_as<double>(value, key);
    else if (key == "min_dual_weight") t.min_dual_weight = get_as<double>(value, key);
    else if (key == "validation_fraction") t.validation_fraction = get_as<double>(value, key);
    else if (key == "kmeans_max_iterations") t.kmeans_max_iterations = get_as<std::size_t>(value, key);
    else if (key == "kmeans_tolerance") t.kmeans_tolerance = get_as<double>(value, key);
    else if (key == "divergence_factor") t.divergence_factor = get_as<double>(value, key);
    else if (key == "divergence_window") t.divergence_window = get_as<std::size_t>(value, key);
    else if (key == "beh2stat_select_best") t.beh2stat_select_best = get_as<bool>(value, key);
    else throw ConfigError("unknown config key 'train." + key + "'");
  }
}

void apply_network(const json& doc, NetworkOverrides& n) {
  if (!doc.is_object()) throw ConfigError("config key 'network' must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "embed_dim") n.embed_dim = get_as<std::size_t>(value, key);
    else if (key == "hidden_dim") n.hidden_dim = get_as<std::size_t>(value, key);
    else if (key == "beh2stat_width") n.beh2stat_width = get_as<std::size_t>(value, key);
    else if (key == "beh2stat_depth") n.beh2stat_depth = get_as<std::size_t>(value, key);
    else if (key == "assigner_width") n.assigner_width = get_as<std::size_t>(value, key);
    else if (key == "dropout") n.dropout = get_as<double>(value, key);
    else throw ConfigError("unknown config key 'network." + key + "'");
  }
}

GreedyOrder parse_greedy_order(const std::string& name) {
  if (name == "best_reach") return GreedyOrder::kBestReach;
  if (name == "reach_per_cost") return GreedyOrder::kReachPerCost;
  throw ConfigError("unknown DISC-BC ordering '" + name + "'");
}

std::string greedy_order_name(GreedyOrder order) {
  return order == GreedyOrder::kBestReach ? "best_reach" : "reach_per_cost";
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& doc, ExperimentConfig c) {
  if (!doc.is_object()) throw ConfigError("experiment config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "preset") c.preset = get_as<std::string>(value, key);
    else if (key == "dataset_dir") c.dataset_dir = get_as<std::string>(value, key);
    else if (key == "data_seed") c.data_seed = get_as<std::uint64_t>(value, key);
    else if (key == "media_seed") c.media_seed = get_as<std::uint64_t>(value, key);
    else if (key == "media_table") c.media_table_path = get_as<std::string>(value, key);
    else if (key == "models") {
      c.models.clear();
      for (const auto& m : get_as<std::vector<std::string>>(value, key)) {
        c.models.push_back(parse_model_tag(m));
      }
    } else if (key == "k") c.ks = get_as<std::vector<std::size_t>>(value, key);
    else if (key == "seeds") c.seeds = get_as<std::vector<std::uint64_t>>(value, key);
    else if (key == "budget") c.budget = get_as<double>(value, key);
    else if (key == "budget_fraction") c.budget_fraction = get_as<double>(value, key);
    else if (key == "costs") c.costs = get_as<std::vector<double>>(value, key);
    else if (key == "out") c.out = get_as<std::string>(value, key);
    else if (key == "ablate_step2") c.ablate_step2 = get_as<bool>(value, key);
    else if (key == "formulation_fidelity") c.paper_literal_barrier = get_as<bool>(value, key);
    else if (key == "auroc_final_session_only") c.auroc_final_session_only = get_as<bool>(value, key);
    else if (key == "disc_bc_order") c.disc_bc_order = parse_greedy_order(get_as<std::string>(value, key));
    else if (key == "workers") c.workers = get_as<std::size_t>(value, key);
    else if (key == "save_checkpoints") c.save_checkpoints = get_as<bool>(value, key);
    else if (key == "train") apply_train(value, c.train);
    else if (key == "network") apply_network(value, c.network);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(doc);
}

json experiment_config_to_json(const ExperimentConfig& c) {
  std::vector<std::string> models;
  for (ModelTag m : c.models) models.push_back(model_tag_name(m));
  const TrainConfig& t = c.train;
  json doc = {
      {"preset", c.preset},
      {"data_seed", c.data_seed},
      {"media_seed", c.media_seed},
      {"models", models},
      {"k", c.ks},
      {"seeds", c.seeds},
      {"budget_fraction", c.budget_fraction},
      {"costs", c.costs},
      {"out", c.out.string()},
      {"ablate_step2", c.ablate_step2},
      {"formulation_fidelity", c.paper_literal_barrier},
      {"auroc_final_session_only", c.auroc_final_session_only},
      {"disc_bc_order", greedy_order_name(c.disc_bc_order)},
      {"workers", c.workers},
      {"save_checkpoints", c.save_checkpoints},
      {"train",
       {{"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"beh2stat_learning_rate", t.beh2stat_learning_rate},
        {"pretrain_iterations", t.pretrain_iterations},
        {"selector_iterations", t.selector_iterations},
        {"actor_critic_iterations", t.actor_critic_iterations},
        {"beh2stat_iterations", t.beh2stat_iterations},
        {"joint_iterations", t.joint_iterations},
        {"min_epochs", t.min_epochs},
        {"lookback", t.lookback},
        {"alpha", t.weights.alpha},
        {"beta", t.weights.beta},
        {"min_dual_weight", t.min_dual_weight},
        {"validation_fraction", t.validation_fraction},
        {"kmeans_max_iterations", t.kmeans_max_iterations},
        {"kmeans_tolerance", t.kmeans_tolerance},
        {"divergence_factor", t.divergence_factor},
        {"divergence_window", t.divergence_window},
        {"beh2stat_select_best", t.beh2stat_select_best}}},
      {"network",
       {{"embed_dim", c.network.embed_dim},
        {"hidden_dim", c.network.hidden_dim},
        {"beh2stat_width", c.network.beh2stat_width},
        {"beh2stat_depth", c.network.beh2stat_depth},
        {"assigner_width", c.network.assigner_width},
        {"dropout", c.network.dropout}}}};
  if (c.dataset_dir) doc["dataset_dir"] = c.dataset_dir->string();
  if (c.media_table_path) doc["media_table"] = c.media_table_path->string();
  if (c.budget) doc["budget"] = *c.budget;
  return doc;
}

void generate_inputs(const std::string& preset, std::uint64_t data_seed, std::uint64_t media_seed,
                     const std::vector<double>& costs, const std::filesystem::path& dir) {
  GeneratorConfig g = GeneratorConfig::preset(preset);
  g.seed = data_seed;
  save_dataset(dir, generate_dataset(g));
  save_media_table(dir / "media_table.json", generate_media_table(g.schema, media_seed, costs));
}

namespace {

constexpr std::uint64_t kSaltModelInit = 0x7007;

struct Inputs {
  Dataset dataset;
  MediaTable table;
  std::string train_bytes;
  std::string test_bytes;
  std::string table_bytes;
};

Inputs prepare_inputs(const ExperimentConfig& config) {
  Inputs in;
  StaticSchema schema;
  if (config.dataset_dir) {
    in.dataset = load_dataset(*config.dataset_dir);
  } else {
    GeneratorConfig g = GeneratorConfig::preset(config.preset);
    g.seed = config.data_seed;
    in.dataset = generate_dataset(g);
    schema = g.schema;
  }
  if (config.media_table_path) {
    in.table = load_media_table(*config.media_table_path);
    if (!config.costs.empty()) {
      if (config.costs.size() != in.table.media_count()) {
        throw ConfigError("--costs has " + std::to_string(config.costs.size()) +
                          " entries but the media table has " +
                          std::to_string(in.table.media_count()) + " media");
      }
      in.table.costs = config.costs;
    }
  } else {
    if (config.dataset_dir) schema = GeneratorConfig::preset(config.preset).schema;
    if (!config.costs.empty() && config.costs.size() != schema.media_count) {
      throw ConfigError("--costs must list one cost per medium (" +
                        std::to_string(schema.media_count) + ")");
    }
    in.table = generate_media_table(schema, config.media_seed, config.costs);
  }
  const std::vector<std::size_t> counts = in.table.schema.class_counts();
  for (const auto* users : {&in.dataset.train, &in.dataset.test}) {
    for (const UserRecord& u : *users) {
      if (u.static_classes.size() != counts.size()) {
        throw ConfigError("user " + u.user_id + " has a static tuple that does not fit the schema");
      }
      for (std::size_t f = 0; f < counts.size(); ++f) {
        if (u.static_classes[f] < 0 || static_cast<std::size_t>(u.static_classes[f]) >= counts[f]) {
          throw ConfigError("user " + u.user_id + " has a static class outside the schema");
        }
      }
    }
  }
  if (in.dataset.train.empty() || in.dataset.test.empty()) {
    throw ConfigError("dataset needs both training and test users");
  }
  in.train_bytes = users_to_jsonl(in.dataset.train);
  in.test_bytes = users_to_jsonl(in.dataset.test);
  in.table_bytes = media_table_to_json(in.table);
  return in;
}

std::size_t vocabulary_of(const Dataset& d) {
  int max_token = 0;
  for (const auto* users : {&d.train, &d.test}) {
    for (const UserRecord& u : *users) {
      for (const auto& s : u.sessions) {
        for (int t : s) max_token = std::max(max_token, t);
      }
    }
  }
  return static_cast<std::size_t>(max_token) + 1;
}

std::size_t max_length(const Dataset& d, bool sessions) {
  std::size_t out = 1;
  for (const auto* users : {&d.train, &d.test}) {
    for (const UserRecord& u : *users) {
      if (sessions) {
        out = std::max(out, u.sessions.size());
      } else {
        for (const auto& s : u.sessions) out = std::max(out, s.size());
      }
    }
  }
  return out;
}

std::string cell_name(ModelTag model, bool ablated, std::size_t k, std::uint64_t seed) {
  return model_tag_name(model) + (ablated ? "-no-step2" : "") + "_K" + std::to_string(k) +
         "_seed" + std::to_string(seed);
}

struct GroupOutput {
  std::vector<CellResult> cells;
  std::optional<Beh2StatRecord> beh2stat;
};

class Logger {
 public:
  explicit Logger(std::ostream* out) : out_(out) {}
  void line(const std::string& text) {
    if (!out_) return;
    std::lock_guard<std::mutex> lock(mutex_);
    *out_ << text << '\n' << std::flush;
  }

 private:
  std::ostream* out_;
  std::mutex mutex_;
};

GroupOutput run_group(const ExperimentConfig& config, const Inputs& in, const MediaEconomics& econ,
                      std::size_t k, std::uint64_t seed, Logger& log) {
  const auto started = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::to_string(std::chrono::duration_cast<std::chrono::seconds>(
                              std::chrono::steady_clock::now() - started)
                              .count()) +
           "s";
  };
  const std::string tag = "[K=" + std::to_string(k) + " seed=" + std::to_string(seed) + "] ";
  GroupOutput out;
  const auto fail_all = [&](const std::string& message) {
    for (ModelTag m : config.models) {
      CellResult cell;
      cell.model = m;
      cell.k = k;
      cell.seed = seed;
      cell.error = message;
      out.cells.push_back(std::move(cell));
    }
    log.line(tag + "failed: " + message);
  };

  TrainConfig tc = config.train;
  tc.clusters = k;
  tc.seed = seed;
  tc.paper_literal_barrier = config.paper_literal_barrier;
  tc.ablate_step2 = config.ablate_step2;

  ModelConfig mc;
  mc.encoder.vocabulary_size = vocabulary_of(in.dataset);
  mc.encoder.embed_dim = config.network.embed_dim;
  mc.encoder.hidden_dim = config.network.hidden_dim;
  mc.encoder.max_pages = max_length(in.dataset, false);
  mc.encoder.max_sessions = max_length(in.dataset, true);
  mc.clusters = k;
  mc.dropout = config.network.dropout;
  mc.beh2stat_width = config.network.beh2stat_width;
  mc.beh2stat_depth = config.network.beh2stat_depth;
  mc.assigner_width = config.network.assigner_width;
  mc.static_classes = in.table.schema.class_counts();
  mc.media = in.table.media_count();

  const DataSplit split = split_validation(in.dataset.train, tc.validation_fraction, seed);
  const UserBatch everyone = as_batch(in.dataset.train);
  const UserBatch test_users = as_batch(in.dataset.test);

  ConvergenceTrace shared;
  SegmentationModel discovery;  // after stages 1–2 and Beh2Stat
  SegmentationModel ablated;    // after stage 1 and Beh2Stat
  const bool need_full =
      !config.ablate_step2 ||
      std::any_of(config.models.begin(), config.models.end(), [](ModelTag m) { return !is_dad(m); });
  try {
    Rng init = detail::stage_rng(seed, kSaltModelInit);
    SegmentationModel base(mc, init);
    run_pretraining(base, split, tc, shared);
    log.line(tag + "stage 1 done (" + elapsed() + ")");
    if (need_full) {
      discovery = base;
      train_actor_critic(discovery, split, tc, shared);
      log.line(tag + "stage 2 done (" + elapsed() + ")");
    }
    SegmentationModel& stat_model = need_full ? discovery : ablated;
    if (!need_full) ablated = base;
    train_beh2stat(stat_model, split, tc, shared);
    log.line(tag + "Beh2Stat done (" + elapsed() + ")");
    out.beh2stat = Beh2StatRecord{k, seed, beh2stat_accuracy(stat_model, in.table.schema, test_users)};
  } catch (const std::exception& e) {
    fail_all(e.what());
    return out;
  }

  const EncodedUsers test_encoded_discovery =
      need_full ? encode_users(discovery.encoder, test_users) : EncodedUsers{};

  for (ModelTag m : config.models) {
    CellResult cell;
    cell.model = m;
    cell.k = k;
    cell.seed = seed;
    const std::string name = cell_name(m, config.ablate_step2, k, seed);
    ConvergenceTrace trace = shared;
    try {
      SegmentationModel model;
      double auroc_value = 0.0;
      SegmentProfile profile;
      if (!is_dad(m)) {
        model = discovery;
        profile = profile_segments(model, in.table);
        const Matrix all_z = encode_users(model.encoder, everyone).z;
        const std::vector<SegmentDelivery> segments = hard_segments(model, profile, all_z);
        cell.plan = m == ModelTag::kDiscUc ? baseline_disc_uc(segments, econ)
                                           : baseline_disc_bc(segments, econ, config.disc_bc_order);
        auroc_value =
            auroc_ybar(model, test_encoded_discovery, config.auroc_final_session_only);
      } else {
        model = config.ablate_step2 ? ablated : discovery;
        TrainConfig cell_config = tc;
        cell_config.formulation = formulation_of(m);
        const JointResult joint = train_joint(model, split, in.table, econ, cell_config, trace);
        cell.plan = joint.plan;
        cell.joint_stage = joint.stage;
        profile = profile_segments(model, in.table);
        auroc_value = auroc_ybar(model, encode_users(model.encoder, test_users),
                                 config.auroc_final_session_only);
      }
      cell.metrics = compute_metrics(cell.plan.reach, cell.plan.spend, econ.budget, auroc_value,
                                     m != ModelTag::kDiscUc);
      cell.ok = true;

      trace.save_csv(config.out / "traces" / (name + ".csv"));
      const Matrix test_z = encode_users(model.encoder, test_users).z;
      const auto report = segment_report(cell.plan, model, profile, in.table.schema, test_z);
      write_text_file(config.out / "segments" / (name + ".csv"), segment_report_csv(report));
      if (config.save_checkpoints) {
        save_checkpoint(model, config.out / "checkpoints" / (name + ".json"));
      }
      log.line(tag + model_tag_name(m) + " done (" + elapsed() + ")");
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
      log.line(tag + model_tag_name(m) + " failed: " + e.what());
    }
    out.cells.push_back(std::move(cell));
  }
  return out;
}

std::string beh2stat_csv(const std::vector<Beh2StatRecord>& records) {
  std::ostringstream out;
  out << "K,seed,feature,classes,accuracy,random_baseline\n";
  for (const Beh2StatRecord& r : records) {
    for (const FeatureAccuracy& f : r.features) {
      out << r.k << ',' << r.seed << ',' << f.feature << ',' << f.classes << ','
          << format_double(f.accuracy) << ',' << format_double(f.random_baseline) << '\n';
    }
  }
  return out.str();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log_stream) {
  config.validate();
  Logger log(log_stream);
  const Inputs in = prepare_inputs(config);

  ExperimentResult result;
  MediaEconomics econ;
  econ.population = static_cast<double>(prefix_count(in.dataset.train));
  econ.costs = in.table.costs;
  econ.budget = config.budget ? *config.budget
                              : default_budget(econ.population, econ.costs, config.budget_fraction);
  econ.validate();
  result.budget = econ.budget;
  result.population = econ.population;
  for (std::size_t j : econ.goals_above_ceiling()) {
    log.line("warning: reach goal for medium " + std::to_string(j) +
             " exceeds 1 (budget above the reachable ceiling)");
  }

  std::filesystem::create_directories(config.out / "traces");
  std::filesystem::create_directories(config.out / "segments");
  if (config.save_checkpoints) std::filesystem::create_directories(config.out / "checkpoints");
  write_text_file(config.out / "inputs" / "train.jsonl", in.train_bytes);
  write_text_file(config.out / "inputs" / "test.jsonl", in.test_bytes);
  write_text_file(config.out / "inputs" / "media_table.json", in.table_bytes);

  std::vector<std::pair<std::size_t, std::uint64_t>> groups;
  for (std::size_t k : config.ks) {
    for (std::uint64_t seed : config.seeds) groups.emplace_back(k, seed);
  }
  std::vector<GroupOutput> outputs(groups.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t g = next++; g < groups.size(); g = next++) {
      outputs[g] = run_group(config, in, econ, groups[g].first, groups[g].second, log);
    }
  };
  const std::size_t width = std::min(config.workers, groups.size());
  if (width <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < width; ++w) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }

  for (GroupOutput& g : outputs) {
    for (CellResult& c : g.cells) result.cells.push_back(std::move(c));
    if (g.beh2stat) result.beh2stat.push_back(std::move(*g.beh2stat));
  }

  // Rows: per model (config order), per K: each seed, then mean and stderr.
  for (ModelTag m : config.models) {
    const std::string name = model_tag_name(m) + (config.ablate_step2 ? "-no-step2" : "");
    for (std::size_t k : config.ks) {
      std::vector<ModelMetrics> ok_metrics;
      for (std::uint64_t seed : config.seeds) {
        for (const CellResult& c : result.cells) {
          if (c.model != m || c.k != k || c.seed != seed || !c.ok) continue;
          const ModelMetrics& x = c.metrics;
          result.rows.push_back({name, k, "seed:" + std::to_string(seed), x.auroc_ybar,
                                 x.within_pct_budget, x.spend_per_unit_reach, x.effective_spend,
                                 x.reach_effc_effe});
          ok_metrics.push_back(x);
        }
      }
      if (!ok_metrics.empty()) {
        for (MetricsRow& row : aggregate_metrics(name, k, ok_metrics)) {
          result.rows.push_back(std::move(row));
        }
      }
    }
  }
  for (const CellResult& c : result.cells) result.failed += c.ok ? 0 : 1;

  write_text_file(config.out / "metrics.csv", metrics_csv(result.rows));
  write_text_file(config.out / "beh2stat_accuracy.csv", beh2stat_csv(result.beh2stat));

  const json config_json = experiment_config_to_json(config);
  json cells = json::array();
  json artifacts = {{"metrics", "metrics.csv"},
                    {"beh2stat_accuracy", "beh2stat_accuracy.csv"},
                    {"train_users", "inputs/train.jsonl"},
                    {"test_users", "inputs/test.jsonl"},
                    {"media_table", "inputs/media_table.json"}};
  for (const CellResult& c : result.cells) {
    const std::string name = cell_name(c.model, config.ablate_step2, c.k, c.seed);
    json entry = {{"cell", name}, {"ok", c.ok}};
    if (c.ok) {
      entry["trace"] = "traces/" + name + ".csv";
      entry["segments"] = "segments/" + name + ".csv";
      if (config.save_checkpoints) entry["checkpoint"] = "checkpoints/" + name + ".json";
    } else {
      entry["error"] = c.error;
    }
    cells.push_back(std::move(entry));
  }
  const json manifest = {
      {"config", config_json},
      {"config_sha256", sha256_hex(config_json.dump())},
      {"dataset_sha256", sha256_hex(in.train_bytes + in.test_bytes)},
      {"train_sha256", sha256_hex(in.train_bytes)},
      {"test_sha256", sha256_hex(in.test_bytes)},
      {"media_table_sha256", sha256_hex(in.table_bytes)},
      {"budget", econ.budget},
      {"population", econ.population},
      {"costs", econ.costs},
      {"failed_cells", result.failed},
      {"cells", std::move(cells)},
      {"artifacts", std::move(artifacts)}};
  write_text_file(config.out / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

}  // namespace reachseg

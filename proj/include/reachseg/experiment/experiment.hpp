#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reachseg/evaluation/evaluate.hpp"
#include "reachseg/evaluation/metrics.hpp"
#include "reachseg/pipeline/training.hpp"

namespace reachseg {

enum class ModelTag { kDiscUc, kDiscBc, kDadCsse, kDadCase, kDadSmin, kDadBarr, kDadAlm };

/// Throws ConfigError for an unknown tag.
ModelTag parse_model_tag(const std::string& tag);
std::string model_tag_name(ModelTag tag);
bool is_dad(ModelTag tag);
/// Constrained formulation of a DAD model. Throws invalid_argument for DISC models.
Formulation formulation_of(ModelTag tag);
std::vector<ModelTag> all_model_tags();

/// Network sizes that may be overridden from a config file.
struct NetworkOverrides {
  std::size_t embed_dim = 50;
  std::size_t hidden_dim = 50;
  std::size_t beh2stat_width = 500;
  std::size_t beh2stat_depth = 4;
  std::size_t assigner_width = 50;
  double dropout = 0.3;
};

struct ExperimentConfig {
  std::string preset = "tiny";
  std::optional<std::filesystem::path> dataset_dir;  // train.jsonl + test.jsonl
  std::uint64_t data_seed = 2024;
  std::uint64_t media_seed = 7;
  std::optional<std::filesystem::path> media_table_path;
  std::vector<ModelTag> models = all_model_tags();
  std::vector<std::size_t> ks = {5};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7};
  TrainConfig train;
  NetworkOverrides network;
  std::optional<double> budget;
  double budget_fraction = 0.5;
  std::vector<double> costs;  // empty: default_costs()
  std::filesystem::path out = "out";
  bool ablate_step2 = false;
  bool paper_literal_barrier = false;
  bool auroc_final_session_only = false;
  GreedyOrder disc_bc_order = GreedyOrder::kBestReach;
  std::size_t workers = 1;
  bool save_checkpoints = false;

  /// Throws ConfigError when the configuration is inconsistent.
  void validate() const;
};

/// Keys mirror the struct fields; "train" and "network" are nested objects.
/// Unknown keys are rejected with ConfigError.
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc,
                                             ExperimentConfig base = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);

struct CellResult {
  ModelTag model = ModelTag::kDiscUc;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  ModelMetrics metrics;
  DeliveryPlan plan;
  StageResult joint_stage;  // DAD models only
};

struct Beh2StatRecord {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<FeatureAccuracy> features;
};

struct ExperimentResult {
  std::vector<CellResult> cells;
  std::vector<MetricsRow> rows;
  std::vector<Beh2StatRecord> beh2stat;
  std::size_t failed = 0;
  double budget = 0.0;
  double population = 0.0;
};

/// Runs every (model, K, seed) cell and writes metrics.csv, manifest.json,
/// beh2stat_accuracy.csv, traces/, segments/ (and checkpoints/ on request)
/// under config.out. Stages 1–2 and Beh2Stat are trained once per (K, seed)
/// and shared by the models of that pair. Failed cells are recorded and the
/// run continues.
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

/// Writes <dir>/train.jsonl, <dir>/test.jsonl and <dir>/media_table.json.
void generate_inputs(const std::string& preset, std::uint64_t data_seed, std::uint64_t media_seed,
                     const std::vector<double>& costs, const std::filesystem::path& dir);

}  // namespace reachseg

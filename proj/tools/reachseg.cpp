// reachseg: run segmentation/delivery experiments or generate synthetic inputs.
//
//   reachseg run --preset tiny --models dad-alm,disc-bc --k 5 --seeds 0,1 --out out/
//   reachseg generate --preset tiny --out data/
//
// Exit status: 0 all cells ok, 2 some cells failed, 1 configuration error.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "reachseg/errors.hpp"
#include "reachseg/experiment/experiment.hpp"

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::vector<T> parse_numbers(const std::string& text, const std::string& flag) {
  std::vector<T> out;
  for (const std::string& item : split_list(text)) {
    try {
      std::size_t used = 0;
      if constexpr (std::is_floating_point_v<T>) {
        out.push_back(static_cast<T>(std::stod(item, &used)));
      } else {
        if (!item.empty() && item[0] == '-') throw std::invalid_argument(item);
        out.push_back(static_cast<T>(std::stoull(item, &used)));
      }
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw reachseg::ConfigError(flag + ": cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw reachseg::ConfigError(flag + ": empty list");
  return out;
}

struct RunFlags {
  std::string config;
  std::string models;
  std::string ks;
  std::string seeds;
  std::string preset;
  std::string dataset;
  std::string media_table;
  std::string costs;
  std::string out;
  std::string disc_bc_order;
  std::uint64_t data_seed = 0;
  std::uint64_t media_seed = 0;
  double budget = 0.0;
  std::size_t workers = 0;
  bool ablate = false;
  bool fidelity = false;
  bool checkpoints = false;
  bool final_session = false;
};

int run_command(const RunFlags& f, const CLI::App& app) {
  using namespace reachseg;
  ExperimentConfig config = f.config.empty() ? ExperimentConfig{} : load_experiment_config(f.config);
  if (!f.models.empty()) {
    config.models.clear();
    for (const std::string& m : split_list(f.models)) config.models.push_back(parse_model_tag(m));
  }
  if (!f.ks.empty()) config.ks = parse_numbers<std::size_t>(f.ks, "--k");
  if (!f.seeds.empty()) config.seeds = parse_numbers<std::uint64_t>(f.seeds, "--seeds");
  if (!f.preset.empty()) config.preset = f.preset;
  if (!f.dataset.empty()) config.dataset_dir = f.dataset;
  if (!f.media_table.empty()) config.media_table_path = f.media_table;
  if (!f.costs.empty()) config.costs = parse_numbers<double>(f.costs, "--costs");
  if (!f.out.empty()) config.out = f.out;
  if (app.count("--data-seed")) config.data_seed = f.data_seed;
  if (app.count("--media-seed")) config.media_seed = f.media_seed;
  if (app.count("--budget")) config.budget = f.budget;
  if (app.count("--workers")) config.workers = f.workers;
  if (!f.disc_bc_order.empty()) {
    config = experiment_config_from_json({{"disc_bc_order", f.disc_bc_order}}, config);
  }
  if (f.ablate) config.ablate_step2 = true;
  if (f.fidelity) config.paper_literal_barrier = true;
  if (f.checkpoints) config.save_checkpoints = true;
  if (f.final_session) config.auroc_final_session_only = true;

  const ExperimentResult result = run_experiment(config, &std::cerr);
  std::cout << reachseg::metrics_csv(result.rows);
  if (result.failed > 0) {
    std::cerr << result.failed << " of " << result.cells.size() << " cells failed\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Behavioral segmentation with budget-constrained media delivery"};
  app.require_subcommand(1);

  RunFlags f;
  CLI::App* run = app.add_subcommand("run", "Train and evaluate every (model, K, seed) cell");
  run->add_option("--config", f.config, "JSON experiment config; flags override it");
  run->add_option("--models", f.models,
                  "Comma list of disc-uc, disc-bc, dad-csse, dad-case, dad-smin, dad-barr, dad-alm");
  run->add_option("--k", f.ks, "Comma list of cluster counts");
  run->add_option("--seeds", f.seeds, "Comma list of model seeds");
  run->add_option("--preset", f.preset, "Synthetic preset: tiny, dataset1-like, dataset2-like");
  run->add_option("--data-seed", f.data_seed, "Seed of the synthetic dataset");
  run->add_option("--dataset", f.dataset, "Directory with train.jsonl and test.jsonl");
  run->add_option("--media-seed", f.media_seed, "Seed of the synthetic media table");
  run->add_option("--media-table", f.media_table, "Media table JSON file");
  run->add_option("--budget", f.budget, "Budget B (default: half the cheapest full-reach spend)");
  run->add_option("--costs", f.costs, "Comma list of per-medium costs");
  run->add_option("--out", f.out, "Output directory");
  run->add_option("--workers", f.workers, "Parallel (K, seed) groups");
  run->add_option("--disc-bc-order", f.disc_bc_order, "best_reach or reach_per_cost");
  run->add_flag("--ablate-step2", f.ablate, "Skip the actor-critic stage (DAD models only)");
  run->add_flag("--formulation-fidelity", f.fidelity,
                "Barrier term as printed: -log(-T_R)/w");
  run->add_flag("--save-checkpoints", f.checkpoints, "Write a model checkpoint per cell");
  run->add_flag("--auroc-final-session", f.final_session,
                "Compute AUROC on each user's final session only");

  std::string gen_preset = "tiny";
  std::string gen_out = "data";
  std::string gen_costs;
  std::uint64_t gen_data_seed = 2024;
  std::uint64_t gen_media_seed = 7;
  CLI::App* generate = app.add_subcommand("generate", "Write a synthetic dataset and media table");
  generate->add_option("--preset", gen_preset, "Synthetic preset");
  generate->add_option("--data-seed", gen_data_seed, "Dataset seed");
  generate->add_option("--media-seed", gen_media_seed, "Media table seed");
  generate->add_option("--costs", gen_costs, "Comma list of per-medium costs");
  generate->add_option("--out", gen_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return run_command(f, *run);
    std::vector<double> costs;
    if (!gen_costs.empty()) costs = parse_numbers<double>(gen_costs, "--costs");
    reachseg::generate_inputs(gen_preset, gen_data_seed, gen_media_seed, costs, gen_out);
    std::cout << "wrote " << gen_out << "/train.jsonl, test.jsonl, media_table.json\n";
    return 0;
  } catch (const reachseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const reachseg::ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "reachseg/networks/encoder.hpp"
#include "reachseg/networks/heads.hpp"

namespace reachseg {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t clusters = 5;
  double dropout = 0.3;
  std::size_t beh2stat_width = 500;
  std::size_t beh2stat_depth = 4;
  std::size_t assigner_width = 50;
  std::vector<std::size_t> static_classes;  // one entry per static feature
  std::size_t media = 3;

  void validate() const;
};

/// Which training stages have run. Later stages check these before starting.
struct StageFlags {
  bool encoder_pretrained = false;
  bool clusters_initialized = false;
  bool selector_pretrained = false;
  bool actor_critic_trained = false;
  bool beh2stat_trained = false;
  bool joint_trained = false;
};

/// All learnable components: f_θ, g_φ, h_ψ, ℰ, b_ω, v_δ.
/// Copying a model deep-copies every parameter.
struct SegmentationModel {
  SegmentationModel() = default;
  SegmentationModel(const ModelConfig& config, Rng& rng);

  ModelConfig config;
  StageFlags stages;
  HanEncoder encoder;
  Head predictor;
  Head selector;
  EmbeddingDictionary dictionary;
  Head beh2stat;
  Head assigner;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

/// Self-describing JSON: config, stage flags and every named parameter with
/// its shape. Values are written with round-trip precision.
std::string checkpoint_to_json(const SegmentationModel& model);
SegmentationModel checkpoint_from_json(const std::string& text);
void save_checkpoint(const SegmentationModel& model, const std::filesystem::path& path);
SegmentationModel load_checkpoint(const std::filesystem::path& path);

}  // namespace reachseg

#include "reachseg/networks/model.hpp"

#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "reachseg/errors.hpp"
#include "reachseg/fileio.hpp"

namespace reachseg {

using nlohmann::json;

void ModelConfig::validate() const {
  if (clusters == 0) throw std::invalid_argument("ModelConfig: clusters must be >= 1");
  if (media == 0) throw std::invalid_argument("ModelConfig: media must be >= 1");
  if (static_classes.empty()) throw std::invalid_argument("ModelConfig: no static features");
  for (std::size_t c : static_classes) {
    if (c < 2) throw std::invalid_argument("ModelConfig: static features need >= 2 classes");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("ModelConfig: dropout in [0,1)");
  if (encoder.vocabulary_size == 0) throw std::invalid_argument("ModelConfig: vocabulary size 0");
}

SegmentationModel::SegmentationModel(const ModelConfig& cfg, Rng& rng) : config(cfg) {
  config.validate();
  const std::size_t h = config.encoder.hidden_dim;
  encoder = HanEncoder(config.encoder, rng);
  predictor = make_predictor(h, config.dropout, rng);
  selector = make_selector(h, config.clusters, config.dropout, rng);
  dictionary = EmbeddingDictionary(config.clusters, h);
  beh2stat = make_beh2stat(h, config.static_classes, config.beh2stat_width,
                           config.beh2stat_depth, rng);
  const std::size_t total_classes =
      std::accumulate(config.static_classes.begin(), config.static_classes.end(), std::size_t{0});
  assigner = make_medium_assigner(total_classes, config.assigner_width, config.media, rng);
}

std::vector<Parameter*> SegmentationModel::parameters() {
  std::vector<Parameter*> out = encoder.parameters();
  for (Head* head : {&predictor, &selector}) {
    for (Parameter* p : head->parameters()) out.push_back(p);
  }
  out.push_back(&dictionary.centroids);
  for (Head* head : {&beh2stat, &assigner}) {
    for (Parameter* p : head->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<const Parameter*> SegmentationModel::parameters() const {
  auto mutable_params = const_cast<SegmentationModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

namespace {

json config_to_json(const ModelConfig& c) {
  return {{"vocabulary_size", c.encoder.vocabulary_size},
          {"embed_dim", c.encoder.embed_dim},
          {"hidden_dim", c.encoder.hidden_dim},
          {"max_pages", c.encoder.max_pages},
          {"max_sessions", c.encoder.max_sessions},
          {"clusters", c.clusters},
          {"dropout", c.dropout},
          {"beh2stat_width", c.beh2stat_width},
          {"beh2stat_depth", c.beh2stat_depth},
          {"assigner_width", c.assigner_width},
          {"static_classes", c.static_classes},
          {"media", c.media}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.encoder.vocabulary_size = j.at("vocabulary_size").get<std::size_t>();
  c.encoder.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.encoder.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.encoder.max_pages = j.at("max_pages").get<std::size_t>();
  c.encoder.max_sessions = j.at("max_sessions").get<std::size_t>();
  c.clusters = j.at("clusters").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.beh2stat_width = j.at("beh2stat_width").get<std::size_t>();
  c.beh2stat_depth = j.at("beh2stat_depth").get<std::size_t>();
  c.assigner_width = j.at("assigner_width").get<std::size_t>();
  c.static_classes = j.at("static_classes").get<std::vector<std::size_t>>();
  c.media = j.at("media").get<std::size_t>();
  return c;
}

json stages_to_json(const StageFlags& s) {
  return {{"encoder_pretrained", s.encoder_pretrained},
          {"clusters_initialized", s.clusters_initialized},
          {"selector_pretrained", s.selector_pretrained},
          {"actor_critic_trained", s.actor_critic_trained},
          {"beh2stat_trained", s.beh2stat_trained},
          {"joint_trained", s.joint_trained}};
}

StageFlags stages_from_json(const json& j) {
  StageFlags s;
  s.encoder_pretrained = j.at("encoder_pretrained").get<bool>();
  s.clusters_initialized = j.at("clusters_initialized").get<bool>();
  s.selector_pretrained = j.at("selector_pretrained").get<bool>();
  s.actor_critic_trained = j.at("actor_critic_trained").get<bool>();
  s.beh2stat_trained = j.at("beh2stat_trained").get<bool>();
  s.joint_trained = j.at("joint_trained").get<bool>();
  return s;
}

}  // namespace

std::string checkpoint_to_json(const SegmentationModel& model) {
  json params = json::array();
  for (const Parameter* p : model.parameters()) {
    const auto values = p->value.values();
    params.push_back({{"name", p->name},
                      {"rows", p->value.rows()},
                      {"cols", p->value.cols()},
                      {"values", std::vector<double>(values.begin(), values.end())}});
  }
  json doc = {{"config", config_to_json(model.config)},
              {"stages", stages_to_json(model.stages)},
              {"parameters", std::move(params)}};
  return doc.dump();
}

SegmentationModel checkpoint_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid checkpoint JSON: ") + e.what(), 1);
  }
  try {
    Rng rng(0);
    SegmentationModel model(config_from_json(doc.at("config")), rng);
    model.stages = stages_from_json(doc.at("stages"));
    std::map<std::string, Parameter*> by_name;
    for (Parameter* p : model.parameters()) by_name[p->name] = p;
    const json& params = doc.at("parameters");
    if (params.size() != by_name.size()) {
      throw ParseError("checkpoint parameter count does not match the model", 1);
    }
    for (const json& entry : params) {
      const auto name = entry.at("name").get<std::string>();
      auto it = by_name.find(name);
      if (it == by_name.end()) throw ParseError("unknown parameter '" + name + "'", 1);
      Parameter& p = *it->second;
      const auto rows = entry.at("rows").get<std::size_t>();
      const auto cols = entry.at("cols").get<std::size_t>();
      if (rows != p.value.rows() || cols != p.value.cols()) {
        throw ParseError("shape mismatch for parameter '" + name + "'", 1);
      }
      p.value = Matrix(rows, cols, entry.at("values").get<std::vector<double>>());
      p.zero_grad();
    }
    return model;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what(), 1);
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what(), 1);
  }
}

void save_checkpoint(const SegmentationModel& model, const std::filesystem::path& path) {
  write_text_file(path, checkpoint_to_json(model));
}

SegmentationModel load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_text_file(path));
}

}  // namespace reachseg

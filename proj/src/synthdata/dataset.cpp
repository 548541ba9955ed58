#include "reachseg/synthdata/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "reachseg/errors.hpp"
#include "reachseg/fileio.hpp"

namespace reachseg {

using nlohmann::json;

std::size_t StaticSchema::tuple_count() const {
  std::size_t count = 1;
  for (const auto& f : features) count *= f.classes;
  return count;
}

std::vector<std::size_t> StaticSchema::class_counts() const {
  std::vector<std::size_t> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(f.classes);
  return out;
}

std::size_t StaticSchema::total_classes() const {
  std::size_t total = 0;
  for (const auto& f : features) total += f.classes;
  return total;
}

std::size_t StaticSchema::tuple_index(std::span<const int> classes) const {
  if (classes.size() != features.size()) {
    throw std::invalid_argument("tuple_index: expected " + std::to_string(features.size()) +
                                " classes, got " + std::to_string(classes.size()));
  }
  std::size_t index = 0;
  for (std::size_t f = 0; f < features.size(); ++f) {
    if (classes[f] < 0 || static_cast<std::size_t>(classes[f]) >= features[f].classes) {
      throw std::invalid_argument("tuple_index: class out of range for feature '" +
                                  features[f].name + "'");
    }
    index = index * features[f].classes + static_cast<std::size_t>(classes[f]);
  }
  return index;
}

std::vector<int> StaticSchema::tuple_classes(std::size_t index) const {
  if (index >= tuple_count()) throw std::out_of_range("tuple_classes: index out of range");
  std::vector<int> out(features.size());
  for (std::size_t f = features.size(); f-- > 0;) {
    out[f] = static_cast<int>(index % features[f].classes);
    index /= features[f].classes;
  }
  return out;
}

void StaticSchema::validate() const {
  if (features.empty()) throw std::invalid_argument("StaticSchema: no features");
  for (const auto& f : features) {
    if (f.classes < 2) {
      throw std::invalid_argument("StaticSchema: feature '" + f.name + "' needs >= 2 classes");
    }
  }
  if (media_count < 1) throw std::invalid_argument("StaticSchema: media_count must be >= 1");
}

StaticSchema StaticSchema::dataset1() {
  return {{{"country", 6}, {"source", 2}, {"member", 3}, {"browser", 6}, {"os", 6}}, 3};
}

StaticSchema StaticSchema::dataset2() {
  return {{{"medium", 3},
           {"device_category", 2},
           {"operating_system", 3},
           {"geo", 4},
           {"browser", 2},
           {"source", 3}},
          3};
}

UserBatch as_batch(std::span<const UserRecord> users) {
  UserBatch out;
  out.reserve(users.size());
  for (const auto& u : users) out.push_back(&u);
  return out;
}

std::vector<std::size_t> prefix_offsets(const UserBatch& users) {
  std::vector<std::size_t> offsets{0};
  offsets.reserve(users.size() + 1);
  for (const UserRecord* u : users) offsets.push_back(offsets.back() + u->session_count());
  return offsets;
}

void GeneratorConfig::validate() const {
  schema.validate();
  if (min_sessions < 1 || min_sessions > max_sessions) {
    throw std::invalid_argument("GeneratorConfig: invalid sessions-per-user range");
  }
  if (min_pages < 1 || min_pages > max_pages) {
    throw std::invalid_argument("GeneratorConfig: invalid pages-per-session range");
  }
  if (archetype_count < 1) throw std::invalid_argument("GeneratorConfig: need >= 1 archetype");
  if (vocabulary_size < 2 * archetype_count) {
    throw std::invalid_argument("GeneratorConfig: vocabulary of " +
                                std::to_string(vocabulary_size) +
                                " pages is too small for " + std::to_string(archetype_count) +
                                " archetype topics (need 2 pages per topic)");
  }
  if (!conversion_logits.empty() && conversion_logits.size() != archetype_count) {
    throw std::invalid_argument("GeneratorConfig: conversion_logits size != archetype_count");
  }
  if (topic_focus < 0.0 || topic_focus > 1.0 || static_focus < 0.0 || static_focus > 1.0) {
    throw std::invalid_argument("GeneratorConfig: focus parameters must lie in [0, 1]");
  }
}

GeneratorConfig GeneratorConfig::preset(const std::string& name) {
  GeneratorConfig c;
  if (name == "tiny") return c;
  if (name == "dataset1-like") {
    c.train_users = 1664;
    c.test_users = 416;
    c.min_sessions = 1;
    c.max_sessions = 8;
    c.min_pages = 2;
    c.max_pages = 40;
    c.vocabulary_size = 200;
    c.schema = StaticSchema::dataset1();
    return c;
  }
  if (name == "dataset2-like") {
    c.train_users = 26292;
    c.test_users = 6572;
    c.min_sessions = 3;
    c.max_sessions = 8;
    c.min_pages = 5;
    c.max_pages = 40;
    c.vocabulary_size = 150;
    c.schema = StaticSchema::dataset2();
    return c;
  }
  throw std::invalid_argument("unknown dataset preset '" + name + "'");
}

std::vector<std::string> GeneratorConfig::preset_names() {
  return {"tiny", "dataset1-like", "dataset2-like"};
}

GeneratorModel make_generator_model(const GeneratorConfig& config) {
  config.validate();
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  GeneratorModel model;

  std::normal_distribution<double> intent(0.0, 1.0);
  model.page_intent.resize(config.vocabulary_size);
  for (double& v : model.page_intent) v = intent(rng);

  const std::size_t archetypes = config.archetype_count;
  const std::size_t block = config.vocabulary_size / archetypes;
  const double background = (1.0 - config.topic_focus) / static_cast<double>(config.vocabulary_size);

  model.archetypes.resize(archetypes);
  for (std::size_t a = 0; a < archetypes; ++a) {
    Archetype& arch = model.archetypes[a];
    arch.page_distribution.assign(config.vocabulary_size, background);
    for (std::size_t p = a * block; p < (a + 1) * block; ++p) {
      arch.page_distribution[p] += config.topic_focus / static_cast<double>(block);
    }
    if (!config.conversion_logits.empty()) {
      arch.conversion_logit = config.conversion_logits[a];
    } else if (archetypes == 1) {
      arch.conversion_logit = 0.5 * (config.logit_low + config.logit_high);
    } else {
      const double frac = static_cast<double>(a) / static_cast<double>(archetypes - 1);
      arch.conversion_logit = config.logit_low + frac * (config.logit_high - config.logit_low);
    }
    for (const auto& feature : config.schema.features) {
      std::uniform_int_distribution<std::size_t> preferred_draw(0, feature.classes - 1);
      const std::size_t preferred = preferred_draw(rng);
      const double rest = (1.0 - config.static_focus) / static_cast<double>(feature.classes - 1);
      std::vector<double> dist(feature.classes, rest);
      dist[preferred] = config.static_focus;
      arch.static_distributions.push_back(std::move(dist));
    }
  }
  return model;
}

namespace {

UserRecord draw_user(const GeneratorConfig& config, const GeneratorModel& model,
                     std::size_t archetype, std::string user_id, Rng& rng) {
  const Archetype& arch = model.archetypes[archetype];
  std::discrete_distribution<int> page_draw(arch.page_distribution.begin(),
                                            arch.page_distribution.end());
  std::uniform_int_distribution<std::size_t> session_count(config.min_sessions,
                                                           config.max_sessions);
  std::uniform_int_distribution<std::size_t> page_count(config.min_pages, config.max_pages);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  UserRecord user;
  user.user_id = std::move(user_id);
  const std::size_t sessions = session_count(rng);
  for (std::size_t s = 0; s < sessions; ++s) {
    const std::size_t pages = page_count(rng);
    std::vector<int> session(pages);
    double intent = 0.0;
    for (auto& page : session) {
      page = page_draw(rng);
      intent += model.page_intent[static_cast<std::size_t>(page)];
    }
    intent /= static_cast<double>(pages);
    const double logit = arch.conversion_logit + config.content_weight * intent;
    const double p = 1.0 / (1.0 + std::exp(-logit));
    user.labels.push_back(unit(rng) < p ? 1 : 0);
    user.sessions.push_back(std::move(session));
  }
  for (const auto& dist : arch.static_distributions) {
    std::discrete_distribution<int> class_draw(dist.begin(), dist.end());
    user.static_classes.push_back(class_draw(rng));
  }
  return user;
}

std::string padded_id(const char* prefix, std::size_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return std::string(prefix) + digits;
}

}  // namespace

GeneratedData generate_dataset_with_latents(const GeneratorConfig& config) {
  const GeneratorModel model = make_generator_model(config);
  Rng rng(config.seed);
  std::uniform_int_distribution<std::size_t> archetype_draw(0, config.archetype_count - 1);
  GeneratedData out;
  for (std::size_t i = 0; i < config.train_users; ++i) {
    const std::size_t a = archetype_draw(rng);
    out.train_archetypes.push_back(a);
    out.dataset.train.push_back(draw_user(config, model, a, padded_id("train-", i), rng));
  }
  for (std::size_t i = 0; i < config.test_users; ++i) {
    const std::size_t a = archetype_draw(rng);
    out.test_archetypes.push_back(a);
    out.dataset.test.push_back(draw_user(config, model, a, padded_id("test-", i), rng));
  }
  return out;
}

Dataset generate_dataset(const GeneratorConfig& config) {
  return generate_dataset_with_latents(config).dataset;
}

namespace {

json user_to_json(const UserRecord& u) {
  return json{{"user_id", u.user_id},
              {"sessions", u.sessions},
              {"labels", u.labels},
              {"static", u.static_classes}};
}

UserRecord user_from_json(const json& j, std::size_t line) {
  try {
    UserRecord u;
    u.user_id = j.at("user_id").get<std::string>();
    u.sessions = j.at("sessions").get<std::vector<std::vector<int>>>();
    u.labels = j.at("labels").get<std::vector<int>>();
    u.static_classes = j.at("static").get<std::vector<int>>();
    if (u.sessions.empty()) throw ParseError("user has no sessions", line);
    if (u.labels.size() != u.sessions.size()) {
      throw ParseError("labels length does not match sessions length", line);
    }
    for (const auto& s : u.sessions) {
      if (s.empty()) throw ParseError("empty session", line);
    }
    for (int y : u.labels) {
      if (y != 0 && y != 1) throw ParseError("labels must be 0 or 1", line);
    }
    return u;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed user record: ") + e.what(), line);
  }
}

}  // namespace

std::string users_to_jsonl(std::span<const UserRecord> users) {
  std::string out;
  for (const auto& u : users) {
    out += user_to_json(u).dump();
    out += '\n';
  }
  return out;
}

std::vector<UserRecord> users_from_jsonl(const std::string& text) {
  std::vector<UserRecord> users;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    users.push_back(user_from_json(j, line_no));
  }
  return users;
}


void save_users(const std::filesystem::path& path, std::span<const UserRecord> users) {
  write_text_file(path, users_to_jsonl(users));
}

std::vector<UserRecord> load_users(const std::filesystem::path& path) {
  return users_from_jsonl(read_text_file(path));
}

void save_dataset(const std::filesystem::path& directory, const Dataset& dataset) {
  std::filesystem::create_directories(directory);
  save_users(directory / "train.jsonl", dataset.train);
  save_users(directory / "test.jsonl", dataset.test);
}

Dataset load_dataset(const std::filesystem::path& directory) {
  return {load_users(directory / "train.jsonl"), load_users(directory / "test.jsonl")};
}

}  // namespace reachseg

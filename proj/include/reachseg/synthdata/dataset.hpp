#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "reachseg/numerics/parameter.hpp"

namespace reachseg {

struct StaticFeature {
  std::string name;
  std::size_t classes = 0;

  friend bool operator==(const StaticFeature&, const StaticFeature&) = default;
};

/// The media-side static characteristics and the number of media.
struct StaticSchema {
  std::vector<StaticFeature> features;
  std::size_t media_count = 0;

  /// Cardinality of the tuple space (product of class counts).
  std::size_t tuple_count() const;
  std::vector<std::size_t> class_counts() const;
  std::size_t total_classes() const;
  /// Mixed-radix index, last feature varying fastest.
  std::size_t tuple_index(std::span<const int> classes) const;
  std::vector<int> tuple_classes(std::size_t index) const;
  void validate() const;

  static StaticSchema dataset1();
  static StaticSchema dataset2();

  friend bool operator==(const StaticSchema&, const StaticSchema&) = default;
};

/// One user's session-ordered page-token sequences, a conversion label per
/// session, and one class index per static feature.
struct UserRecord {
  std::string user_id;
  std::vector<std::vector<int>> sessions;
  std::vector<int> labels;
  std::vector<int> static_classes;

  std::size_t session_count() const { return sessions.size(); }

  friend bool operator==(const UserRecord&, const UserRecord&) = default;
};

/// Non-owning view of a group of users processed together.
using UserBatch = std::vector<const UserRecord*>;

UserBatch as_batch(std::span<const UserRecord> users);

/// Row offsets of each user's prefixes when all (user, t) pairs are stacked
/// in user order: user u owns rows [offsets[u], offsets[u + 1]).
std::vector<std::size_t> prefix_offsets(const UserBatch& users);

struct Dataset {
  std::vector<UserRecord> train;
  std::vector<UserRecord> test;
};

struct GeneratorConfig {
  std::size_t train_users = 500;
  std::size_t test_users = 125;
  std::size_t min_sessions = 2;
  std::size_t max_sessions = 6;
  std::size_t min_pages = 3;
  std::size_t max_pages = 12;
  std::size_t vocabulary_size = 60;
  std::size_t archetype_count = 5;
  StaticSchema schema = StaticSchema::dataset2();
  /// Per-archetype base conversion logits; resized to archetype_count by
  /// linear interpolation when empty.
  std::vector<double> conversion_logits;
  double logit_low = -2.5;
  double logit_high = 1.5;
  /// Probability that a page is drawn from the archetype's own topic block.
  double topic_focus = 0.7;
  /// Probability mass on each archetype's preferred class per static feature.
  double static_focus = 0.75;
  /// Weight of the session-content signal (mean page intent) on the conversion logit.
  double content_weight = 1.5;
  std::uint64_t seed = 2024;

  void validate() const;

  static GeneratorConfig preset(const std::string& name);
  static std::vector<std::string> preset_names();
};

/// Latent generative parameters of one user archetype.
struct Archetype {
  std::vector<double> page_distribution;
  double conversion_logit = 0.0;
  std::vector<std::vector<double>> static_distributions;
};

struct GeneratorModel {
  std::vector<Archetype> archetypes;
  std::vector<double> page_intent;  // per vocabulary entry
};

GeneratorModel make_generator_model(const GeneratorConfig& config);

/// Generated users together with the latent archetype of each, which tests
/// use to check learnability properties of the data.
struct GeneratedData {
  Dataset dataset;
  std::vector<std::size_t> train_archetypes;
  std::vector<std::size_t> test_archetypes;
};

GeneratedData generate_dataset_with_latents(const GeneratorConfig& config);
Dataset generate_dataset(const GeneratorConfig& config);

void save_users(const std::filesystem::path& path, std::span<const UserRecord> users);
std::vector<UserRecord> load_users(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& directory, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& directory);

std::string users_to_jsonl(std::span<const UserRecord> users);
std::vector<UserRecord> users_from_jsonl(const std::string& text);

}  // namespace reachseg

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "reachseg/synthdata/dataset.hpp"

namespace reachseg {

struct MediaRate {
  double match = 0.0;
  double exposure = 0.0;

  friend bool operator==(const MediaRate&, const MediaRate&) = default;
};

/// Match/exposure rates for every (static tuple, medium) pair plus per-medium costs.
struct MediaTable {
  StaticSchema schema;
  std::vector<double> costs;
  std::vector<MediaRate> rates;  // index: tuple * media_count + medium

  std::size_t media_count() const { return schema.media_count; }
  const MediaRate& rate(std::size_t tuple, std::size_t medium) const {
    return rates[tuple * schema.media_count + medium];
  }
  void validate() const;

  friend bool operator==(const MediaTable&, const MediaTable&) = default;
};

inline constexpr double kMinRate = 0.25;
inline constexpr double kMaxRate = 0.75;

/// Default per-medium costs: 50, 60, 70, ... currency units.
std::vector<double> default_costs(std::size_t media_count);

/// Independent uniform draws of match and exposure on [0.25, 0.75] for every
/// tuple × medium. `costs` defaults to default_costs() when empty.
MediaTable generate_media_table(const StaticSchema& schema, std::uint64_t seed,
                                std::vector<double> costs = {});

std::string media_table_to_json(const MediaTable& table);
MediaTable media_table_from_json(const std::string& text);
void save_media_table(const std::filesystem::path& path, const MediaTable& table);
MediaTable load_media_table(const std::filesystem::path& path);

}  // namespace reachseg

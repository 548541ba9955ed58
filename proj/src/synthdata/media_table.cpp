#include "reachseg/synthdata/media_table.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

#include "reachseg/errors.hpp"
#include "reachseg/fileio.hpp"

namespace reachseg {

using nlohmann::json;

void MediaTable::validate() const {
  schema.validate();
  if (costs.size() != schema.media_count) {
    throw std::invalid_argument("MediaTable: expected " + std::to_string(schema.media_count) +
                                " costs, got " + std::to_string(costs.size()));
  }
  for (double c : costs) {
    if (!(c > 0.0)) throw std::invalid_argument("MediaTable: costs must be positive");
  }
  if (rates.size() != schema.tuple_count() * schema.media_count) {
    throw std::invalid_argument("MediaTable: rate table does not cover every (tuple, medium)");
  }
  for (const auto& r : rates) {
    if (r.match < kMinRate || r.match > kMaxRate || r.exposure < kMinRate ||
        r.exposure > kMaxRate) {
      throw std::invalid_argument("MediaTable: rates must lie in [0.25, 0.75]");
    }
  }
}

std::vector<double> default_costs(std::size_t media_count) {
  std::vector<double> costs(media_count);
  for (std::size_t j = 0; j < media_count; ++j) costs[j] = 50.0 + 10.0 * static_cast<double>(j);
  return costs;
}

MediaTable generate_media_table(const StaticSchema& schema, std::uint64_t seed,
                                std::vector<double> costs) {
  schema.validate();
  MediaTable table;
  table.schema = schema;
  table.costs = costs.empty() ? default_costs(schema.media_count) : std::move(costs);
  Rng rng(seed);
  std::uniform_real_distribution<double> draw(kMinRate, kMaxRate);
  table.rates.resize(schema.tuple_count() * schema.media_count);
  for (auto& r : table.rates) {
    r.match = draw(rng);
    r.exposure = draw(rng);
  }
  table.validate();
  return table;
}

std::string media_table_to_json(const MediaTable& table) {
  json features = json::array();
  for (const auto& f : table.schema.features) {
    features.push_back({{"name", f.name}, {"classes", f.classes}});
  }
  json rates = json::array();
  for (const auto& r : table.rates) rates.push_back(json::array({r.match, r.exposure}));
  json doc = {{"schema", {{"features", features}, {"media_count", table.schema.media_count}}},
              {"costs", table.costs},
              {"rates", rates}};
  return doc.dump(1) + "\n";
}

namespace {

std::size_t line_of_byte(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(
                 std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

}  // namespace

MediaTable media_table_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid media table JSON: ") + e.what(),
                     line_of_byte(text, e.byte == 0 ? 0 : e.byte - 1));
  }
  MediaTable table;
  try {
    for (const auto& f : doc.at("schema").at("features")) {
      table.schema.features.push_back(
          {f.at("name").get<std::string>(), f.at("classes").get<std::size_t>()});
    }
    table.schema.media_count = doc.at("schema").at("media_count").get<std::size_t>();
    table.costs = doc.at("costs").get<std::vector<double>>();
    for (const auto& r : doc.at("rates")) {
      if (!r.is_array() || r.size() != 2) throw ParseError("rate entry must be [match, exposure]", 1);
      table.rates.push_back({r[0].get<double>(), r[1].get<double>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed media table: ") + e.what(), 1);
  }
  try {
    table.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), 1);
  }
  return table;
}

void save_media_table(const std::filesystem::path& path, const MediaTable& table) {
  write_text_file(path, media_table_to_json(table));
}

MediaTable load_media_table(const std::filesystem::path& path) {
  return media_table_from_json(read_text_file(path));
}

}  // namespace reachseg

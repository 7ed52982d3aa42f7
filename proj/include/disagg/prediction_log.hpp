#pragma once
// Prediction-log data model and ingestion.
//
// A prediction log is a comma-separated table with one row per
// (sample, model, seed). Factor values (city, location, device, ...) come
// from extra log columns, from a metadata table joined on sample_id, or from
// the sample_id itself when it follows the schema's filename pattern.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace disagg {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised while reading a table; row() is the 1-based data row (0 = header).
class LoadError : public std::runtime_error {
 public:
  LoadError(std::size_t row, const std::string& message);
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

using FactorLevels = std::map<std::string, std::string>;

struct PredictionRecord {
  std::string sample_id;
  std::string model_id;
  std::int64_t seed = 0;
  std::string true_label;
  std::string predicted_label;
  FactorLevels factors;

  bool correct() const noexcept { return true_label == predicted_label; }
  // Throws std::out_of_range when the factor is not set.
  const std::string& factor(const std::string& name) const;

  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

struct FactorDecl {
  std::string name;
  std::vector<std::string> levels;
};

struct FilenamePattern {
  std::vector<std::string> fields{"scene", "city", "location", "segment", "device"};
  char delimiter = '-';
  std::string extension = ".wav";

  void validate() const;
};

inline constexpr std::string_view kLocationFactor = "location";
inline constexpr std::string_view kCityFactor = "city";

class CorpusSchema {
 public:
  CorpusSchema(std::vector<std::string> classes, std::vector<FactorDecl> factors,
               std::map<std::string, std::string> location_class_map = {},
               std::optional<FilenamePattern> filename_pattern = std::nullopt);

  static CorpusSchema from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  const std::vector<std::string>& classes() const noexcept { return classes_; }
  bool has_class(std::string_view name) const;
  std::optional<std::size_t> class_index(std::string_view name) const;

  const std::vector<FactorDecl>& factors() const noexcept { return factors_; }
  const FactorDecl* find_factor(std::string_view name) const;
  // Position of `level` in the declared level list of `factor`.
  std::optional<std::size_t> level_index(std::string_view factor, std::string_view level) const;

  bool has_location_factor() const { return find_factor(kLocationFactor) != nullptr; }
  const std::map<std::string, std::string>& location_class_map() const noexcept {
    return location_class_map_;
  }
  // Throws SchemaError for an undeclared location.
  const std::string& location_class(const std::string& location) const;

  const std::optional<FilenamePattern>& filename_pattern() const noexcept {
    return filename_pattern_;
  }

 private:
  std::vector<std::string> classes_;
  std::vector<FactorDecl> factors_;
  std::map<std::string, std::string> location_class_map_;
  std::optional<FilenamePattern> filename_pattern_;
};

CorpusSchema load_schema(const std::filesystem::path& path);

// Splits a filename into one value per pattern field.
std::map<std::string, std::string> parse_filename(std::string_view name,
                                                  const FilenamePattern& pattern);
std::string join_filename(const std::map<std::string, std::string>& fields,
                          const FilenamePattern& pattern);

// sample_id -> factor levels
using MetadataTable = std::map<std::string, FactorLevels>;

MetadataTable read_metadata(std::istream& in, const CorpusSchema& schema);
MetadataTable load_metadata(const std::filesystem::path& path, const CorpusSchema& schema);

std::vector<PredictionRecord> read_predictions(std::istream& in, const CorpusSchema& schema,
                                               const MetadataTable* metadata = nullptr);
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path,
                                               const CorpusSchema& schema,
                                               const MetadataTable* metadata = nullptr);

// Writes the canonical log layout: fixed columns, then every schema factor in
// declaration order.
void write_predictions(std::ostream& out, std::span<const PredictionRecord> records,
                       const CorpusSchema& schema);

struct LocationConsistencyReport {
  // Locations (schema order) with at least one record whose true label
  // disagrees with the location->class map.
  std::vector<std::string> inconsistent_locations;
  std::size_t distinct_locations = 0;

  bool consistent() const noexcept { return inconsistent_locations.empty(); }
};

LocationConsistencyReport validate_location_consistency(std::span<const PredictionRecord> records,
                                                        const CorpusSchema& schema);

}  // namespace disagg

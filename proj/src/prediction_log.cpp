#include "disagg/prediction_log.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include "csv.hpp"

namespace disagg {

namespace {

constexpr std::string_view kFixedColumns[] = {"sample_id", "model_id", "seed", "true_label",
                                              "predicted_label"};

void require_unique_nonempty(const std::vector<std::string>& items, const std::string& what) {
  if (items.empty()) throw SchemaError(what + " must not be empty");
  std::set<std::string> seen;
  for (const auto& item : items) {
    if (item.empty()) throw SchemaError(what + " contains an empty name");
    if (!seen.insert(item).second) throw SchemaError(what + " contains duplicate '" + item + "'");
  }
}

std::int64_t parse_seed(const std::string& text, std::size_t row) {
  std::int64_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || text.empty()) {
    throw LoadError(row, "seed '" + text + "' is not an integer");
  }
  return value;
}

std::map<std::string, std::size_t> index_header(const std::vector<std::string>& header) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].empty()) throw LoadError(0, "empty column name at position " + std::to_string(i + 1));
    if (!index.emplace(header[i], i).second) {
      throw LoadError(0, "duplicate column '" + header[i] + "'");
    }
  }
  return index;
}

}  // namespace

LoadError::LoadError(std::size_t row, const std::string& message)
    : std::runtime_error(row == 0 ? "header: " + message : "row " + std::to_string(row) + ": " + message),
      row_(row) {}

const std::string& PredictionRecord::factor(const std::string& name) const {
  auto it = factors.find(name);
  if (it == factors.end()) {
    throw std::out_of_range("record '" + sample_id + "' has no value for factor '" + name + "'");
  }
  return it->second;
}

void FilenamePattern::validate() const {
  require_unique_nonempty(fields, "filename pattern fields");
  if (delimiter == '\0' || delimiter == ',' || delimiter == '\n') {
    throw SchemaError("filename pattern delimiter is not usable");
  }
}

CorpusSchema::CorpusSchema(std::vector<std::string> classes, std::vector<FactorDecl> factors,
                           std::map<std::string, std::string> location_class_map,
                           std::optional<FilenamePattern> filename_pattern)
    : classes_(std::move(classes)),
      factors_(std::move(factors)),
      location_class_map_(std::move(location_class_map)),
      filename_pattern_(std::move(filename_pattern)) {
  require_unique_nonempty(classes_, "class set");
  std::set<std::string> names;
  for (const auto& f : factors_) {
    if (f.name.empty()) throw SchemaError("factor with empty name");
    if (!names.insert(f.name).second) throw SchemaError("duplicate factor '" + f.name + "'");
    require_unique_nonempty(f.levels, "levels of factor '" + f.name + "'");
  }
  if (const auto* location = find_factor(kLocationFactor)) {
    for (const auto& level : location->levels) {
      auto it = location_class_map_.find(level);
      if (it == location_class_map_.end()) {
        throw SchemaError("location '" + level + "' has no entry in location_class_map");
      }
    }
    for (const auto& [level, cls] : location_class_map_) {
      if (!level_index(kLocationFactor, level)) {
        throw SchemaError("location_class_map names undeclared location '" + level + "'");
      }
      if (!has_class(cls)) {
        throw SchemaError("location '" + level + "' maps to unknown class '" + cls + "'");
      }
    }
  } else if (!location_class_map_.empty()) {
    throw SchemaError("location_class_map given but no 'location' factor is declared");
  }
  if (filename_pattern_) filename_pattern_->validate();
}

bool CorpusSchema::has_class(std::string_view name) const {
  return class_index(name).has_value();
}

std::optional<std::size_t> CorpusSchema::class_index(std::string_view name) const {
  auto it = std::find(classes_.begin(), classes_.end(), name);
  if (it == classes_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - classes_.begin());
}

const FactorDecl* CorpusSchema::find_factor(std::string_view name) const {
  for (const auto& f : factors_) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

std::optional<std::size_t> CorpusSchema::level_index(std::string_view factor,
                                                     std::string_view level) const {
  const auto* decl = find_factor(factor);
  if (decl == nullptr) return std::nullopt;
  auto it = std::find(decl->levels.begin(), decl->levels.end(), level);
  if (it == decl->levels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - decl->levels.begin());
}

const std::string& CorpusSchema::location_class(const std::string& location) const {
  auto it = location_class_map_.find(location);
  if (it == location_class_map_.end()) {
    throw SchemaError("unknown location '" + location + "'");
  }
  return it->second;
}

CorpusSchema CorpusSchema::from_json(const nlohmann::json& doc) {
  try {
    auto classes = doc.at("classes").get<std::vector<std::string>>();
    std::vector<FactorDecl> factors;
    for (const auto& f : doc.value("factors", nlohmann::json::array())) {
      factors.push_back({f.at("name").get<std::string>(), f.at("levels").get<std::vector<std::string>>()});
    }
    auto location_map =
        doc.value("location_class_map", nlohmann::json::object()).get<std::map<std::string, std::string>>();
    std::optional<FilenamePattern> pattern;
    if (doc.contains("filename_pattern")) {
      const auto& p = doc.at("filename_pattern");
      FilenamePattern fp;
      if (p.contains("fields")) fp.fields = p.at("fields").get<std::vector<std::string>>();
      if (p.contains("delimiter")) {
        const auto d = p.at("delimiter").get<std::string>();
        if (d.size() != 1) throw SchemaError("filename pattern delimiter must be one character");
        fp.delimiter = d[0];
      }
      if (p.contains("extension")) fp.extension = p.at("extension").get<std::string>();
      pattern = std::move(fp);
    }
    return CorpusSchema(std::move(classes), std::move(factors), std::move(location_map),
                        std::move(pattern));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed schema: ") + e.what());
  }
}

nlohmann::json CorpusSchema::to_json() const {
  nlohmann::json doc;
  doc["classes"] = classes_;
  doc["factors"] = nlohmann::json::array();
  for (const auto& f : factors_) {
    doc["factors"].push_back({{"name", f.name}, {"levels", f.levels}});
  }
  if (!location_class_map_.empty()) doc["location_class_map"] = location_class_map_;
  if (filename_pattern_) {
    doc["filename_pattern"] = {{"fields", filename_pattern_->fields},
                               {"delimiter", std::string(1, filename_pattern_->delimiter)},
                               {"extension", filename_pattern_->extension}};
  }
  return doc;
}

CorpusSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("schema file " + path.string() + " is not valid JSON: " + e.what());
  }
  return CorpusSchema::from_json(doc);
}

std::map<std::string, std::string> parse_filename(std::string_view name,
                                                  const FilenamePattern& pattern) {
  const std::string quoted = "'" + std::string(name) + "'";
  if (name.size() < pattern.extension.size() || !name.ends_with(pattern.extension)) {
    throw ParseError(quoted + ": missing extension " + pattern.extension);
  }
  const auto stem = name.substr(0, name.size() - pattern.extension.size());
  const auto parts = csv::split(stem, pattern.delimiter);
  if (parts.size() != pattern.fields.size()) {
    throw ParseError(quoted + ": expected " + std::to_string(pattern.fields.size()) +
                     " fields, found " + std::to_string(parts.size()));
  }
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].empty()) {
      throw ParseError(quoted + ": field '" + pattern.fields[i] + "' is empty");
    }
    out.emplace(pattern.fields[i], parts[i]);
  }
  return out;
}

std::string join_filename(const std::map<std::string, std::string>& fields,
                          const FilenamePattern& pattern) {
  std::string out;
  for (std::size_t i = 0; i < pattern.fields.size(); ++i) {
    const auto& value = fields.at(pattern.fields[i]);
    if (value.empty() || value.find(pattern.delimiter) != std::string::npos) {
      throw ParseError("value '" + value + "' cannot be encoded in a filename field");
    }
    if (i > 0) out += pattern.delimiter;
    out += value;
  }
  return out + pattern.extension;
}

MetadataTable read_metadata(std::istream& in, const CorpusSchema& schema) {
  std::string line;
  if (!csv::next_line(in, line)) throw LoadError(0, "metadata table is empty (header required)");
  const auto header = csv::split(line);
  const auto index = index_header(header);
  if (!index.contains("sample_id")) throw LoadError(0, "missing column 'sample_id'");
  for (const auto& name : header) {
    if (name != "sample_id" && schema.find_factor(name) == nullptr) {
      throw LoadError(0, "unknown factor column '" + name + "'");
    }
  }

  MetadataTable table;
  std::size_t row = 0;
  while (csv::next_line(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto fields = csv::split(line);
    if (fields.size() != header.size()) {
      throw LoadError(row, "expected " + std::to_string(header.size()) + " columns, found " +
                               std::to_string(fields.size()));
    }
    FactorLevels levels;
    std::string sample_id;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == "sample_id") {
        sample_id = fields[i];
        continue;
      }
      if (!schema.level_index(header[i], fields[i])) {
        throw LoadError(row, "unknown level '" + fields[i] + "' for factor '" + header[i] + "'");
      }
      levels.emplace(header[i], fields[i]);
    }
    if (sample_id.empty()) throw LoadError(row, "empty sample_id");
    if (!table.emplace(sample_id, std::move(levels)).second) {
      throw LoadError(row, "duplicate sample_id '" + sample_id + "'");
    }
  }
  return table;
}

MetadataTable load_metadata(const std::filesystem::path& path, const CorpusSchema& schema) {
  std::ifstream in(path);
  if (!in) throw LoadError(0, "cannot open metadata file " + path.string());
  return read_metadata(in, schema);
}

std::vector<PredictionRecord> read_predictions(std::istream& in, const CorpusSchema& schema,
                                               const MetadataTable* metadata) {
  std::string line;
  if (!csv::next_line(in, line)) throw LoadError(0, "prediction log is empty (header required)");
  const auto header = csv::split(line);
  const auto index = index_header(header);

  std::size_t col[std::size(kFixedColumns)];
  for (std::size_t i = 0; i < std::size(kFixedColumns); ++i) {
    auto it = index.find(std::string(kFixedColumns[i]));
    if (it == index.end()) throw LoadError(0, "missing column '" + std::string(kFixedColumns[i]) + "'");
    col[i] = it->second;
  }
  for (const auto& name : header) {
    const bool fixed = std::find(std::begin(kFixedColumns), std::end(kFixedColumns), name) !=
                       std::end(kFixedColumns);
    if (!fixed && schema.find_factor(name) == nullptr) {
      throw LoadError(0, "unknown factor column '" + name + "'");
    }
  }

  // Factors without a column are resolved from metadata, then from the
  // sample_id as a filename.
  std::vector<std::pair<std::string, std::optional<std::size_t>>> factor_cols;
  bool needs_filename = false;
  for (const auto& f : schema.factors()) {
    auto it = index.find(f.name);
    if (it != index.end()) {
      factor_cols.emplace_back(f.name, it->second);
      continue;
    }
    factor_cols.emplace_back(f.name, std::nullopt);
    if (metadata == nullptr) {
      const auto& pattern = schema.filename_pattern();
      const bool from_name = pattern && std::find(pattern->fields.begin(), pattern->fields.end(),
                                                  f.name) != pattern->fields.end();
      if (!from_name) throw LoadError(0, "missing column '" + f.name + "'");
      needs_filename = true;
    }
  }

  std::vector<std::unordered_set<std::string>> allowed;
  for (const auto& [name, _] : factor_cols) {
    const auto& levels = schema.find_factor(name)->levels;
    allowed.emplace_back(levels.begin(), levels.end());
  }

  std::vector<PredictionRecord> records;
  // sample_id, model_id and seed joined by a byte that cannot appear in a CSV field here.
  std::unordered_set<std::string> seen;
  std::size_t row = 0;
  while (csv::next_line(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto fields = csv::split(line);
    if (fields.size() != header.size()) {
      throw LoadError(row, "expected " + std::to_string(header.size()) + " columns, found " +
                               std::to_string(fields.size()));
    }
    PredictionRecord rec;
    rec.sample_id = fields[col[0]];
    rec.model_id = fields[col[1]];
    rec.seed = parse_seed(fields[col[2]], row);
    rec.true_label = fields[col[3]];
    rec.predicted_label = fields[col[4]];
    if (rec.sample_id.empty()) throw LoadError(row, "empty sample_id");
    if (rec.model_id.empty()) throw LoadError(row, "empty model_id");
    if (!schema.has_class(rec.true_label)) {
      throw LoadError(row, "unknown class '" + rec.true_label + "' in true_label");
    }
    if (!schema.has_class(rec.predicted_label)) {
      throw LoadError(row, "unknown class '" + rec.predicted_label + "' in predicted_label");
    }

    const FactorLevels* joined = nullptr;
    if (metadata != nullptr) {
      auto it = metadata->find(rec.sample_id);
      if (it != metadata->end()) joined = &it->second;
    }
    std::optional<std::map<std::string, std::string>> parsed;
    for (std::size_t fi = 0; fi < factor_cols.size(); ++fi) {
      const auto& [name, column] = factor_cols[fi];
      std::string value;
      if (column) {
        value = fields[*column];
      } else if (joined != nullptr && joined->contains(name)) {
        value = joined->at(name);
      } else if (needs_filename || schema.filename_pattern()) {
        if (!parsed) {
          if (!schema.filename_pattern()) {
            throw LoadError(row, "no value for factor '" + name + "'");
          }
          try {
            parsed = parse_filename(rec.sample_id, *schema.filename_pattern());
          } catch (const ParseError& e) {
            throw LoadError(row, e.what());
          }
        }
        auto it = parsed->find(name);
        if (it == parsed->end()) throw LoadError(row, "no value for factor '" + name + "'");
        value = it->second;
      } else {
        throw LoadError(row, "no value for factor '" + name + "' (sample not in metadata)");
      }
      if (!allowed[fi].contains(value)) {
        throw LoadError(row, "unknown level '" + value + "' for factor '" + name + "'");
      }
      rec.factors.emplace(name, std::move(value));
    }

    if (!seen.insert(rec.sample_id + '\n' + rec.model_id + '\n' + std::to_string(rec.seed)).second) {
      throw LoadError(row, "duplicate (sample_id, model_id, seed) = (" + rec.sample_id + ", " +
                               rec.model_id + ", " + std::to_string(rec.seed) + ")");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path,
                                               const CorpusSchema& schema,
                                               const MetadataTable* metadata) {
  std::ifstream in(path);
  if (!in) throw LoadError(0, "cannot open prediction log " + path.string());
  return read_predictions(in, schema, metadata);
}

void write_predictions(std::ostream& out, std::span<const PredictionRecord> records,
                       const CorpusSchema& schema) {
  out << "sample_id,model_id,seed,true_label,predicted_label";
  for (const auto& f : schema.factors()) out << ',' << f.name;
  out << '\n';
  for (const auto& r : records) {
    out << r.sample_id << ',' << r.model_id << ',' << r.seed << ',' << r.true_label << ','
        << r.predicted_label;
    for (const auto& f : schema.factors()) out << ',' << r.factor(f.name);
    out << '\n';
  }
}

LocationConsistencyReport validate_location_consistency(std::span<const PredictionRecord> records,
                                                        const CorpusSchema& schema) {
  LocationConsistencyReport report;
  const auto* decl = schema.find_factor(kLocationFactor);
  if (decl == nullptr) return report;
  const std::string location_name(kLocationFactor);

  std::set<std::string> present;
  std::set<std::string> bad;
  for (const auto& r : records) {
    const auto& location = r.factor(location_name);
    present.insert(location);
    if (schema.location_class(location) != r.true_label) bad.insert(location);
  }
  report.distinct_locations = present.size();
  for (const auto& level : decl->levels) {
    if (bad.contains(level)) report.inconsistent_locations.push_back(level);
  }
  return report;
}

}  // namespace disagg

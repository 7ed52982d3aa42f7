#include "disagg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

namespace disagg {

namespace {

constexpr double kCountTolerance = 1e-9;

struct Sample {
  std::string id;
  std::string true_label;
  FactorLevels factors;
};

const Nesting* nesting_for(const std::vector<Nesting>& nesting, const std::string& child) {
  for (const auto& n : nesting) {
    if (n.child == child) return &n;
  }
  return nullptr;
}

std::string format_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "syn-%07zu", index);
  return buf;
}

std::vector<std::vector<Sample>> draw_samples(const BiasSpec& spec, SplitMix64& rng) {
  const auto& schema = spec.schema;
  // Unnested factors first so parents are fixed before their children.
  std::vector<std::string> order;
  for (const auto& f : schema.factors()) {
    if (nesting_for(spec.nesting, f.name) == nullptr) order.push_back(f.name);
  }
  for (const auto& f : schema.factors()) {
    if (nesting_for(spec.nesting, f.name) != nullptr) order.push_back(f.name);
  }

  std::vector<std::vector<Sample>> cells;
  std::size_t next_id = 0;
  for (const auto& cell : spec.cells) {
    std::vector<Sample> samples;
    samples.reserve(cell.n_samples);
    for (std::size_t i = 0; i < cell.n_samples; ++i) {
      Sample s;
      s.id = format_id(next_id++);
      for (const auto& [factor, level] : cell.key.levels) s.factors.emplace(factor, level);
      for (const auto& factor : order) {
        if (s.factors.contains(factor)) continue;
        std::vector<std::string> candidates = schema.find_factor(factor)->levels;
        if (const auto* nest = nesting_for(spec.nesting, factor)) {
          const auto& parent_level = s.factors.at(nest->parent);
          std::erase_if(candidates, [&](const std::string& level) {
            return nest->parent_of.at(level) != parent_level;
          });
          if (candidates.empty()) {
            throw SynthError("no level of '" + factor + "' is nested in '" + parent_level + "'");
          }
        }
        s.factors.emplace(factor, candidates[rng.below(candidates.size())]);
      }
      if (schema.has_location_factor()) {
        s.true_label = schema.location_class(s.factors.at(std::string(kLocationFactor)));
      } else {
        s.true_label = schema.classes()[rng.below(schema.classes().size())];
      }
      samples.push_back(std::move(s));
    }
    cells.push_back(std::move(samples));
  }
  return cells;
}

std::string wrong_label(const std::string& truth, const ErrorModel& error_model,
                        const CorpusSchema& schema, SplitMix64& rng) {
  if (error_model.kind == ErrorModel::Kind::Confusion && error_model.target != truth) {
    return error_model.target;
  }
  std::vector<std::string> others;
  for (const auto& c : schema.classes()) {
    if (c != truth) others.push_back(c);
  }
  return others[rng.below(others.size())];
}

}  // namespace

double BiasCell::accuracy_for(const std::string& model) const {
  if (auto it = accuracy.find(model); it != accuracy.end()) return it->second;
  if (auto it = accuracy.find("*"); it != accuracy.end()) return it->second;
  throw SynthError("cell " + key.label() + " has no target accuracy for model '" + model + "'");
}

std::size_t correct_count(const BiasCell& cell, const std::string& model) {
  const double acc = cell.accuracy_for(model);
  if (!(acc >= 0.0 && acc <= 1.0)) {
    throw SynthError("target accuracy " + std::to_string(acc) + " of cell " + cell.key.label() +
                     " is outside [0, 1]");
  }
  const double exact = static_cast<double>(cell.n_samples) * acc;
  const double rounded = std::round(exact);
  if (std::fabs(exact - rounded) > kCountTolerance * std::max(1.0, exact)) {
    throw SynthError("cell " + cell.key.label() + ": n * accuracy = " + std::to_string(exact) +
                     " is not an integer");
  }
  return static_cast<std::size_t>(rounded);
}

void BiasSpec::validate() const {
  if (cells.empty()) throw SynthError("bias spec has no cells");
  if (models.empty()) throw SynthError("bias spec has no models");
  if (seeds.empty()) throw SynthError("bias spec has no seeds");
  if (std::set<std::string>(models.begin(), models.end()).size() != models.size()) {
    throw SynthError("duplicate model id");
  }
  if (std::set<std::int64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw SynthError("duplicate seed");
  }
  if (schema.factors().empty()) throw SynthError("schema declares no factors");
  if (schema.classes().size() < 2) throw SynthError("schema needs at least 2 classes");

  for (const auto& nest : nesting) {
    if (schema.find_factor(nest.child) == nullptr || schema.find_factor(nest.parent) == nullptr) {
      throw SynthError("nesting names an undeclared factor");
    }
    if (nesting_for(nesting, nest.parent) != nullptr) {
      throw SynthError("nesting deeper than one level is not supported");
    }
    for (const auto& level : schema.find_factor(nest.child)->levels) {
      auto it = nest.parent_of.find(level);
      if (it == nest.parent_of.end()) {
        throw SynthError("nesting has no parent for '" + nest.child + "' level '" + level + "'");
      }
      if (!schema.level_index(nest.parent, it->second)) {
        throw SynthError("nesting maps '" + level + "' onto unknown level '" + it->second + "'");
      }
    }
  }

  std::set<StratumKey> keys;
  for (const auto& cell : cells) {
    if (cell.n_samples == 0) throw SynthError("cell " + cell.key.label() + " has no samples");
    if (!keys.insert(cell.key).second) throw SynthError("duplicate cell " + cell.key.label());
    std::set<std::string> named;
    for (const auto& [factor, level] : cell.key.levels) {
      if (!schema.level_index(factor, level)) {
        throw SynthError("cell names unknown level '" + level + "' of factor '" + factor + "'");
      }
      named.insert(factor);
    }
    for (const auto& nest : nesting) {
      if (named.contains(nest.child) && named.contains(nest.parent) &&
          nest.parent_of.at(cell.key.level(nest.child)) != cell.key.level(nest.parent)) {
        throw SynthError("cell " + cell.key.label() + " contradicts the nesting of '" + nest.child + "'");
      }
    }
    if (cell.error_model.kind == ErrorModel::Kind::Confusion &&
        !schema.has_class(cell.error_model.target)) {
      throw SynthError("confusion target '" + cell.error_model.target + "' is not a class");
    }
    for (const auto& model : models) correct_count(cell, model);
  }
}

BiasSpec BiasSpec::from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  try {
    std::optional<CorpusSchema> schema;
    if (doc.contains("schema")) {
      schema = CorpusSchema::from_json(doc.at("schema"));
    } else if (doc.contains("schema_file")) {
      std::filesystem::path p = doc.at("schema_file").get<std::string>();
      schema = load_schema(p.is_absolute() ? p : base_dir / p);
    } else {
      throw SynthError("bias spec needs 'schema' or 'schema_file'");
    }

    BiasSpec spec{*schema, {}, doc.at("models").get<std::vector<std::string>>(),
                  doc.at("seeds").get<std::vector<std::int64_t>>(), {}};

    const auto nesting = doc.value("nesting", nlohmann::json::object());
    for (const auto& [child, entry] : nesting.items()) {
      spec.nesting.push_back({child, entry.at("parent").get<std::string>(),
                              entry.at("map").get<std::map<std::string, std::string>>()});
    }

    for (const auto& c : doc.at("cells")) {
      BiasCell cell;
      std::map<std::size_t, std::pair<std::string, std::string>> ordered;
      for (const auto& [factor, level] : c.at("key").items()) {
        const auto* decl = spec.schema.find_factor(factor);
        if (decl == nullptr) throw SynthError("cell names undeclared factor '" + factor + "'");
        const auto pos = static_cast<std::size_t>(decl - spec.schema.factors().data());
        ordered.emplace(pos, std::make_pair(factor, level.get<std::string>()));
      }
      for (auto& [_, kv] : ordered) cell.key.levels.push_back(std::move(kv));

      const auto n = c.at("n").get<std::int64_t>();
      if (n <= 0) throw SynthError("cell " + cell.key.label() + " has no samples");
      cell.n_samples = static_cast<std::size_t>(n);
      const auto& acc = c.at("accuracy");
      if (acc.is_number()) {
        cell.accuracy["*"] = acc.get<double>();
      } else {
        cell.accuracy = acc.get<std::map<std::string, double>>();
      }
      if (c.contains("error_model")) {
        const auto& em = c.at("error_model");
        const auto kind = em.at("kind").get<std::string>();
        if (kind == "uniform") {
          cell.error_model.kind = ErrorModel::Kind::Uniform;
        } else if (kind == "confusion") {
          cell.error_model.kind = ErrorModel::Kind::Confusion;
          cell.error_model.target = em.at("target").get<std::string>();
        } else {
          throw SynthError("unknown error model '" + kind + "'");
        }
      }
      spec.cells.push_back(std::move(cell));
    }
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw SynthError(std::string("malformed bias spec: ") + e.what());
  } catch (const SchemaError& e) {
    throw SynthError(std::string("bias spec schema: ") + e.what());
  }
}

BiasSpec load_bias_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SynthError("cannot open bias spec " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw SynthError("bias spec " + path.string() + " is not valid JSON: " + e.what());
  }
  return BiasSpec::from_json(doc, path.parent_path());
}

std::vector<PredictionRecord> generate(const BiasSpec& spec, std::uint64_t rng_seed) {
  spec.validate();
  SplitMix64 rng(rng_seed);
  const auto cells = draw_samples(spec, rng);

  std::vector<PredictionRecord> out;
  for (const auto& model : spec.models) {
    for (auto seed : spec.seeds) {
      for (std::size_t c = 0; c < spec.cells.size(); ++c) {
        const auto& cell = spec.cells[c];
        const auto& samples = cells[c];
        const auto k = correct_count(cell, model);

        // Fisher-Yates; the first k shuffled positions are correct.
        std::vector<std::size_t> perm(samples.size());
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = perm.size(); i > 1; --i) {
          std::swap(perm[i - 1], perm[rng.below(i)]);
        }
        std::vector<bool> correct(samples.size(), false);
        for (std::size_t i = 0; i < k; ++i) correct[perm[i]] = true;

        for (std::size_t i = 0; i < samples.size(); ++i) {
          PredictionRecord r;
          r.sample_id = samples[i].id;
          r.model_id = model;
          r.seed = seed;
          r.true_label = samples[i].true_label;
          r.predicted_label = correct[i] ? samples[i].true_label
                                         : wrong_label(samples[i].true_label, cell.error_model,
                                                       spec.schema, rng);
          r.factors = samples[i].factors;
          out.push_back(std::move(r));
        }
      }
    }
  }
  return out;
}

}  // namespace disagg

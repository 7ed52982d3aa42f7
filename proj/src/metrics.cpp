#include "disagg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

namespace disagg {

namespace {

const std::string kLocation(kLocationFactor);
const std::string kCity(kCityFactor);

// Per-class counts over one record set.
struct ClassTally {
  std::vector<std::size_t> tp;
  std::vector<std::size_t> predicted;
  std::vector<std::size_t> actual;

  ClassTally(std::span<const PredictionRecord> records, const CorpusSchema& schema)
      : tp(schema.classes().size()),
        predicted(schema.classes().size()),
        actual(schema.classes().size()) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < schema.classes().size(); ++i) index.emplace(schema.classes()[i], i);
    auto lookup = [&](const std::string& label) {
      auto it = index.find(label);
      if (it == index.end()) throw MetricError("label '" + label + "' is not in the class set");
      return it->second;
    };
    for (const auto& r : records) {
      const auto t = lookup(r.true_label);
      const auto p = lookup(r.predicted_label);
      ++actual[t];
      ++predicted[p];
      if (t == p) ++tp[t];
    }
  }

  PRF prf(std::size_t c) const { return prf_from_counts(tp[c], predicted[c] - tp[c], actual[c] - tp[c]); }
};

double harmonic(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

// Counts for one location inside a scope.
struct LocationTally {
  std::size_t n = 0;
  std::size_t positives = 0;     // true label == location class
  std::size_t hits = 0;          // ... and predicted correctly
  std::size_t false_alarms = 0;  // predicted as the class with another true label
};

double score_location(const LocationTally& loc, const std::string& cls, const ClassTally& scope,
                      const CorpusSchema& schema, const F1Options& opts) {
  const auto c = *schema.class_index(cls);
  const double recall =
      loc.positives > 0 ? static_cast<double>(loc.hits) / static_cast<double>(loc.positives) : 0.0;
  if (opts.precision_scope == PrecisionScope::LocationOnly) {
    return prf_from_counts(loc.hits, loc.false_alarms, loc.positives - loc.hits).f1;
  }
  const double precision = scope.predicted[c] > 0 ? static_cast<double>(scope.tp[c]) /
                                                        static_cast<double>(scope.predicted[c])
                                                  : 0.0;
  return harmonic(precision, recall);
}

std::map<std::string, LocationTally> tally_locations(std::span<const PredictionRecord> scope,
                                                     const CorpusSchema& schema) {
  std::map<std::string, LocationTally> out;
  for (const auto& r : scope) {
    const auto& location = r.factor(kLocation);
    const auto& cls = schema.location_class(location);
    auto& t = out[location];
    ++t.n;
    if (r.true_label == cls) {
      ++t.positives;
      if (r.predicted_label == cls) ++t.hits;
    } else if (r.predicted_label == cls) {
      ++t.false_alarms;
    }
  }
  return out;
}

void require_location_factor(const CorpusSchema& schema) {
  if (!schema.has_location_factor()) throw MetricError("schema declares no location factor");
}

// Location -> city, rejecting locations observed in more than one city.
std::map<std::string, std::string> location_cities(std::span<const PredictionRecord> records) {
  std::map<std::string, std::string> out;
  for (const auto& r : records) {
    const auto& city = r.factor(kCity);
    auto [it, inserted] = out.emplace(r.factor(kLocation), city);
    if (!inserted && it->second != city) {
      throw MetricError("location '" + it->first + "' appears in cities '" + it->second + "' and '" +
                        city + "'");
    }
  }
  return out;
}

std::vector<PredictionRecord> filter_by(std::span<const PredictionRecord> records,
                                        const std::string& factor, const std::string& level) {
  std::vector<PredictionRecord> out;
  for (const auto& r : records) {
    if (r.factor(factor) == level) out.push_back(r);
  }
  return out;
}

std::vector<std::size_t> key_order(const StratumKey& key, const CorpusSchema& schema) {
  std::vector<std::size_t> out;
  for (const auto& [factor, level] : key.levels) out.push_back(*schema.level_index(factor, level));
  return out;
}

}  // namespace

PRF prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  PRF out;
  out.tp = tp;
  out.fp = fp;
  out.fn = fn;
  if (tp + fp > 0) {
    out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  } else {
    out.degenerate = true;
  }
  if (tp + fn > 0) {
    out.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  } else {
    out.degenerate = true;
  }
  out.f1 = tp == 0 ? 0.0 : harmonic(out.precision, out.recall);
  return out;
}

double accuracy(std::span<const PredictionRecord> records) {
  if (records.empty()) throw MetricError("accuracy undefined on empty stratum");
  const auto correct = std::count_if(records.begin(), records.end(),
                                     [](const PredictionRecord& r) { return r.correct(); });
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

PRF class_prf(std::span<const PredictionRecord> records, const std::string& cls,
              const CorpusSchema& schema) {
  const auto c = schema.class_index(cls);
  if (!c) throw MetricError("unknown class '" + cls + "'");
  return ClassTally(records, schema).prf(*c);
}

double macro_f1(std::span<const PredictionRecord> records, const CorpusSchema& schema) {
  if (records.empty()) throw MetricError("macro-F1 undefined on empty stratum");
  const ClassTally tally(records, schema);
  double sum = 0.0;
  for (std::size_t c = 0; c < schema.classes().size(); ++c) sum += tally.prf(c).f1;
  return sum / static_cast<double>(schema.classes().size());
}

double overall_f1(std::span<const PredictionRecord> records, const CorpusSchema& schema,
                  const F1Options& opts) {
  // Micro-F1 of single-label predictions is accuracy.
  return opts.overall == OverallF1::Macro ? macro_f1(records, schema) : accuracy(records);
}

double location_f1(std::span<const PredictionRecord> scope, const std::string& location,
                   const CorpusSchema& schema, const F1Options& opts) {
  require_location_factor(schema);
  const auto& cls = schema.location_class(location);
  LocationTally loc;
  for (const auto& r : scope) {
    if (r.factor(kLocation) != location) continue;
    ++loc.n;
    if (r.true_label == cls) {
      ++loc.positives;
      if (r.predicted_label == cls) ++loc.hits;
    } else if (r.predicted_label == cls) {
      ++loc.false_alarms;
    }
  }
  if (loc.n == 0) throw MetricError("location '" + location + "' has no samples in scope");
  return score_location(loc, cls, ClassTally(scope, schema), schema, opts);
}

double relative_f1(std::span<const PredictionRecord> records, const std::string& location,
                   Baseline baseline, const CorpusSchema& schema, const F1Options& opts) {
  require_location_factor(schema);
  std::vector<PredictionRecord> city_scope;
  std::span<const PredictionRecord> scope = records;
  if (baseline == Baseline::WithinCity) {
    const auto cities = location_cities(records);
    auto it = cities.find(location);
    if (it == cities.end()) throw MetricError("location '" + location + "' has no samples in scope");
    city_scope = filter_by(records, kCity, it->second);
    scope = city_scope;
  }
  const double base = overall_f1(scope, schema, opts);
  if (!(base > 0.0)) throw MetricError("baseline F1 is zero: degenerate model");
  return location_f1(scope, location, schema, opts) / base;
}

std::vector<LocationScore> relative_f1_all(std::span<const PredictionRecord> records,
                                           Baseline baseline, const CorpusSchema& schema,
                                           const F1Options& opts) {
  require_location_factor(schema);
  const bool has_city = schema.find_factor(kCityFactor) != nullptr;
  if (baseline == Baseline::WithinCity && !has_city) {
    throw MetricError("within-city baseline needs a city factor");
  }
  const auto cities = has_city ? location_cities(records) : std::map<std::string, std::string>{};
  const auto& location_levels = schema.find_factor(kLocationFactor)->levels;

  auto score_scope = [&](std::span<const PredictionRecord> scope, std::vector<LocationScore>& out) {
    const double base = overall_f1(scope, schema, opts);
    if (!(base > 0.0)) throw MetricError("baseline F1 is zero: degenerate model");
    const ClassTally tally(scope, schema);
    const auto locations = tally_locations(scope, schema);
    for (const auto& level : location_levels) {
      auto it = locations.find(level);
      if (it == locations.end()) continue;
      LocationScore s;
      s.location = level;
      if (has_city) s.city = cities.at(level);
      s.location_f1 = score_location(it->second, schema.location_class(level), tally, schema, opts);
      s.baseline_f1 = base;
      s.ratio = s.location_f1 / base;
      out.push_back(std::move(s));
    }
  };

  std::vector<LocationScore> out;
  if (records.empty()) return out;
  if (baseline == Baseline::Overall) {
    score_scope(records, out);
  } else {
    const auto by_city = partition(records, {kCity}, schema);
    for (const auto& stratum : by_city.strata()) {
      const auto scope = by_city.records(stratum);
      score_scope(scope, out);
    }
  }
  return out;
}

double population_stddev(std::span<const double> values) {
  if (values.empty()) throw MetricError("standard deviation undefined on empty input");
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) {
    return 0.0;
  }
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / n);
}

MetricCell aggregate_seeds(std::vector<SeedValue> per_seed, std::size_t n_samples) {
  if (per_seed.empty()) throw MetricError("no per-seed values to aggregate");
  if (n_samples == 0) throw MetricError("metric cell needs at least one sample");
  std::set<std::int64_t> seen;
  double sum = 0.0;
  for (const auto& sv : per_seed) {
    if (!seen.insert(sv.seed).second) {
      throw MetricError("duplicate seed " + std::to_string(sv.seed));
    }
    sum += sv.value;
  }
  MetricCell cell;
  cell.value = sum / static_cast<double>(per_seed.size());
  cell.per_seed = std::move(per_seed);
  cell.n_samples = n_samples;
  return cell;
}

std::optional<double> column_dispersion(const EvaluationTable& table, std::size_t column) {
  std::vector<double> values;
  for (const auto& row : table.cells) {
    if (row.at(column)) values.push_back(row[column]->value);
  }
  if (values.empty()) return std::nullopt;
  return population_stddev(values);
}

EvaluationTable build_table(std::span<const PredictionRecord> records, const CorpusSchema& schema,
                            const TableRequest& request) {
  validate_selector(request.selector, schema);
  if (request.metric == MetricKind::RelativeF1 &&
      std::find(request.selector.begin(), request.selector.end(), kLocation) ==
          request.selector.end()) {
    throw MetricError("relative F1 tables need 'location' in the factor selector");
  }

  EvaluationTable table;
  table.selector = request.selector;
  table.metric = request.metric;
  table.models = request.models;
  if (table.models.empty()) {
    std::set<std::string> seen;
    for (const auto& r : records) {
      if (seen.insert(r.model_id).second) table.models.push_back(r.model_id);
    }
  }

  // model -> seed -> records
  std::map<std::string, std::map<std::int64_t, std::vector<PredictionRecord>>> runs;
  for (const auto& r : records) runs[r.model_id][r.seed].push_back(r);

  struct Accum {
    std::vector<SeedValue> per_seed;
    std::size_t n = 0;
  };
  // schema-ordered key -> per-model accumulators
  std::map<std::vector<std::size_t>, std::pair<StratumKey, std::vector<Accum>>> grid;

  for (std::size_t m = 0; m < table.models.size(); ++m) {
    const auto& model = table.models[m];
    auto model_it = runs.find(model);
    if (model_it == runs.end()) throw MetricError("model '" + model + "' is absent from the logs");
    std::vector<std::int64_t> seeds = request.seeds;
    if (seeds.empty()) {
      for (const auto& [seed, _] : model_it->second) seeds.push_back(seed);
    }
    for (auto seed : seeds) {
      auto run_it = model_it->second.find(seed);
      if (run_it == model_it->second.end()) {
        throw MetricError("model '" + model + "' seed " + std::to_string(seed) +
                          " is absent from the logs");
      }
      const auto& run = run_it->second;
      const auto parts = partition(run, request.selector, schema);

      std::map<std::string, double> ratios;
      if (request.metric == MetricKind::RelativeF1) {
        for (const auto& s : relative_f1_all(run, request.baseline, schema, request.f1)) {
          ratios.emplace(s.location, s.ratio);
        }
      }
      for (const auto& stratum : parts.strata()) {
        double value = 0.0;
        switch (request.metric) {
          case MetricKind::Accuracy:
            value = accuracy(parts.records(stratum));
            break;
          case MetricKind::MacroF1:
            value = macro_f1(parts.records(stratum), schema);
            break;
          case MetricKind::RelativeF1:
            value = ratios.at(stratum.key.level(kLocation));
            break;
        }
        auto& slot = grid[key_order(stratum.key, schema)];
        if (slot.second.empty()) {
          slot.first = stratum.key;
          slot.second.resize(table.models.size());
        }
        slot.second[m].per_seed.push_back({seed, value});
        slot.second[m].n += stratum.rows.size();
      }
    }
  }

  for (auto& [order, entry] : grid) {
    table.rows.push_back(entry.first);
    std::vector<std::optional<MetricCell>> row;
    for (auto& acc : entry.second) {
      if (acc.per_seed.empty()) {
        row.emplace_back(std::nullopt);
      } else {
        row.emplace_back(aggregate_seeds(std::move(acc.per_seed), acc.n));
      }
    }
    table.cells.push_back(std::move(row));
  }
  for (std::size_t m = 0; m < table.models.size(); ++m) {
    table.dispersion.push_back(column_dispersion(table, m));
  }
  return table;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw MetricError("quantile undefined on empty input");
  const double pos = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BoxSummary box_summary(std::span<const LabeledValue> values) {
  if (values.empty()) throw MetricError("box summary undefined on empty input");
  std::vector<LabeledValue> ordered(values.begin(), values.end());
  for (const auto& v : ordered) {
    if (!std::isfinite(v.value)) throw MetricError("non-finite value for '" + v.label + "'");
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const LabeledValue& a, const LabeledValue& b) { return a.value < b.value; });
  std::vector<double> sorted;
  sorted.reserve(ordered.size());
  for (const auto& v : ordered) sorted.push_back(v.value);

  BoxSummary box;
  box.n = sorted.size();
  box.q1 = quantile_sorted(sorted, 0.25);
  box.median = quantile_sorted(sorted, 0.5);
  box.q3 = quantile_sorted(sorted, 0.75);
  const double iqr = box.q3 - box.q1;
  const double lo_fence = box.q1 - 1.5 * iqr;
  const double hi_fence = box.q3 + 1.5 * iqr;

  box.lower_whisker = box.q1;
  box.upper_whisker = box.q3;
  bool have_lo = false;
  for (const auto& v : ordered) {
    if (v.value < lo_fence || v.value > hi_fence) {
      box.outliers.push_back(v);
      continue;
    }
    if (!have_lo) {
      box.lower_whisker = v.value;
      have_lo = true;
    }
    box.upper_whisker = v.value;
  }
  return box;
}

}  // namespace disagg

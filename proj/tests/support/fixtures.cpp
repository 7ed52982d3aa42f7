#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace disagg::testing {

std::string data_dir() { return DISAGG_DATA_DIR; }

CorpusSchema small_schema() {
  return CorpusSchema({"a", "b"},
                      {{"city", {"x", "y"}}, {"location", {"1", "2", "3"}}, {"device", {"d1", "d2"}}},
                      {{"1", "a"}, {"2", "b"}, {"3", "a"}});
}

CorpusSchema dcase_schema() { return load_schema(data_dir() + "/dcase_schema.json"); }

PredictionRecord make_record(std::string id, std::string truth, std::string predicted,
                             FactorLevels factors, std::string model, std::int64_t seed) {
  PredictionRecord r;
  r.sample_id = std::move(id);
  r.true_label = std::move(truth);
  r.predicted_label = std::move(predicted);
  r.factors = std::move(factors);
  r.model_id = std::move(model);
  r.seed = seed;
  return r;
}

std::vector<PredictionRecord> labeled(const std::vector<std::string>& truth,
                                      const std::vector<std::string>& predicted) {
  std::vector<PredictionRecord> out;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out.push_back(make_record("r" + std::to_string(i), truth[i], predicted[i]));
  }
  return out;
}

BiasSpec random_bias_spec(std::mt19937_64& rng, std::size_t max_records) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };

  std::vector<std::string> classes;
  const auto n_classes = pick(2, 8);
  for (std::size_t i = 0; i < n_classes; ++i) classes.push_back("c" + std::to_string(i));

  std::vector<std::string> cities, locations, devices;
  std::map<std::string, std::string> location_class, parent_of;
  const auto n_cities = pick(1, 4);
  for (std::size_t c = 0; c < n_cities; ++c) {
    cities.push_back("city" + std::to_string(c));
    const auto n_loc = pick(1, 4);
    for (std::size_t l = 0; l < n_loc; ++l) {
      const auto id = "L" + std::to_string(locations.size());
      locations.push_back(id);
      location_class[id] = classes[pick(0, n_classes - 1)];
      parent_of[id] = cities.back();
    }
  }
  const auto n_devices = pick(1, 3);
  for (std::size_t d = 0; d < n_devices; ++d) devices.push_back("dev" + std::to_string(d));

  CorpusSchema schema(classes, {{"city", cities}, {"location", locations}, {"device", devices}},
                      location_class);

  std::vector<std::string> models;
  const auto n_models = pick(1, 3);
  for (std::size_t m = 0; m < n_models; ++m) models.push_back("model" + std::to_string(m));
  std::vector<std::int64_t> seeds;
  const auto n_seeds = pick(1, 3);
  for (std::size_t s = 0; s < n_seeds; ++s) seeds.push_back(static_cast<std::int64_t>(s * 7 + 1));

  const bool by_location = pick(0, 1) == 1;
  std::vector<BiasCell> cells;
  const auto& outer = by_location ? locations : cities;
  const std::string outer_factor = by_location ? "location" : "city";
  const std::size_t runs = n_models * n_seeds;
  const std::size_t n_keys = outer.size() * devices.size();
  const std::size_t budget = std::max<std::size_t>(1, max_records / (runs * n_keys));
  for (const auto& o : outer) {
    for (const auto& d : devices) {
      if (pick(0, 5) == 0 && !cells.empty()) continue;  // leave holes
      BiasCell cell;
      cell.key.levels = {{outer_factor, o}, {"device", d}};
      cell.n_samples = pick(1, std::min<std::size_t>(budget, 60));
      for (const auto& m : models) {
        const auto k = pick(0, cell.n_samples);
        cell.accuracy[m] = static_cast<double>(k) / static_cast<double>(cell.n_samples);
      }
      if (pick(0, 2) == 0) {
        cell.error_model.kind = ErrorModel::Kind::Confusion;
        cell.error_model.target = classes[pick(0, n_classes - 1)];
      }
      cells.push_back(std::move(cell));
    }
  }
  return BiasSpec{schema, std::move(cells), models, seeds, {Nesting{"location", "city", parent_of}}};
}

BiasSpec city_column_spec(const std::array<double, 6>& accuracy_percent, std::size_t per_city,
                          const std::string& model, std::vector<std::int64_t> seeds) {
  auto schema = dcase_schema();
  std::vector<BiasCell> cells;
  for (std::size_t c = 0; c < kCities.size(); ++c) {
    BiasCell cell;
    cell.key.levels = {{"city", kCities[c]}, {"device", "a"}};
    cell.n_samples = per_city;
    // Exact-count target: round(n * acc) / n reproduces the percentage.
    const double correct = std::round(accuracy_percent[c] / 100.0 * static_cast<double>(per_city));
    cell.accuracy[model] = correct / static_cast<double>(per_city);
    cells.push_back(std::move(cell));
  }
  // Location nesting from the bundled demo spec.
  const auto demo = load_bias_spec(data_dir() + "/table1_ffnn_mobile.json");
  return BiasSpec{schema, std::move(cells), {model}, std::move(seeds), demo.nesting};
}

}  // namespace disagg::testing

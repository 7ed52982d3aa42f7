#pragma once
// Shared test fixtures: small schemas, record builders, the published
// per-city accuracies and a random bias-spec generator.

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "disagg/prediction_log.hpp"
#include "disagg/synth.hpp"

namespace disagg::testing {

inline constexpr std::array<const char*, 6> kCities = {"barcelona", "helsinki", "london",
                                                       "paris",     "stockholm", "vienna"};

struct PublishedColumn {
  const char* dataset;
  const char* model;
  std::array<double, 6> city_accuracy;  // percent, kCities order
  double sigma;                         // percent, as printed
};

// Per-city accuracies and the sigma row as printed in the reference table.
inline const std::array<PublishedColumn, 10>& published_table() {
  static const std::array<PublishedColumn, 10> table = {{
      {"TUT-Urban", "FFNN", {52.9, 56.1, 51.1, 45.5, 53.0, 59.8}, 4.4},
      {"TUT-Urban", "TDNN", {61.7, 61.3, 61.7, 53.8, 47.4, 57.9}, 5.2},
      {"TUT-Urban", "CNN6", {64.8, 70.2, 71.6, 62.0, 73.1, 69.9}, 3.9},
      {"TUT-Urban", "CNN10", {60.9, 67.3, 74.2, 61.0, 68.4, 74.0}, 5.4},
      {"TUT-Urban", "CNN14", {58.9, 63.5, 71.5, 62.4, 68.2, 73.0}, 5.1},
      {"TUT-Mobile", "FFNN", {55.9, 50.8, 52.7, 45.8, 56.2, 58.8}, 4.3},
      {"TUT-Mobile", "TDNN", {56.4, 57.1, 59.2, 54.1, 46.9, 54.3}, 3.9},
      {"TUT-Mobile", "CNN6", {61.3, 67.9, 70.1, 60.1, 72.5, 68.0}, 4.5},
      {"TUT-Mobile", "CNN10", {57.9, 66.7, 72.0, 59.7, 68.3, 72.4}, 5.6},
      {"TUT-Mobile", "CNN14", {57.6, 58.3, 70.8, 60.8, 67.3, 65.7}, 4.9},
  }};
  return table;
}

// Two classes {a, b}; cities {x, y}; locations 1 -> a, 2 -> b, 3 -> a; devices {d1, d2}.
CorpusSchema small_schema();

// Ten scene classes, six cities, 83 locations, three devices.
CorpusSchema dcase_schema();
std::string data_dir();

PredictionRecord make_record(std::string id, std::string truth, std::string predicted,
                             FactorLevels factors = {}, std::string model = "m",
                             std::int64_t seed = 0);

// Records with given labels and no factors; ids "r0", "r1", ...
std::vector<PredictionRecord> labeled(const std::vector<std::string>& truth,
                                      const std::vector<std::string>& predicted);

// A random corpus shape: 2-8 classes, 1-4 cities with nested locations,
// 1-3 devices, 1-3 models, 1-3 seeds, cells over (city, device) or
// (location, device) with exact-count accuracies. Total records stay below
// `max_records`.
BiasSpec random_bias_spec(std::mt19937_64& rng, std::size_t max_records = 10000);

// Bias spec for a single model column: one (city, device a) cell per city.
BiasSpec city_column_spec(const std::array<double, 6>& accuracy_percent, std::size_t per_city,
                          const std::string& model = "FFNN",
                          std::vector<std::int64_t> seeds = {0});

}  // namespace disagg::testing

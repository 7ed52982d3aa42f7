#pragma once
// Accuracy, per-class precision/recall/F1, per-location F1 ratios, seed
// aggregation, dispersion and box summaries.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "disagg/prediction_log.hpp"
#include "disagg/strata.hpp"

namespace disagg {

// Raised for undefined metrics (empty strata, zero baselines, missing runs).
class MetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  // Set when precision or recall had a zero denominator.
  bool degenerate = false;
};

// Builds a PRF from raw counts; zero denominators give 0 and set the flag.
PRF prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

double accuracy(std::span<const PredictionRecord> records);
PRF class_prf(std::span<const PredictionRecord> records, const std::string& cls,
              const CorpusSchema& schema);
// Unweighted mean of class F1 over the full schema class set.
double macro_f1(std::span<const PredictionRecord> records, const CorpusSchema& schema);

// Which "overall F1" normalizes location scores, and how far the precision
// of a location's class reaches.
enum class OverallF1 { Macro, Micro };
enum class PrecisionScope { NormalizationScope, LocationOnly };

struct F1Options {
  OverallF1 overall = OverallF1::Macro;
  PrecisionScope precision_scope = PrecisionScope::NormalizationScope;
};

double overall_f1(std::span<const PredictionRecord> records, const CorpusSchema& schema,
                  const F1Options& opts = {});

// F1 of the location's class: recall over the location's own samples,
// precision over every prediction of that class within `scope`.
double location_f1(std::span<const PredictionRecord> scope, const std::string& location,
                   const CorpusSchema& schema, const F1Options& opts = {});

enum class Baseline { Overall, WithinCity };

// location_f1 divided by the overall F1 of the full records (Overall) or of
// the location's city (WithinCity, which also narrows the location scope).
double relative_f1(std::span<const PredictionRecord> records, const std::string& location,
                   Baseline baseline, const CorpusSchema& schema, const F1Options& opts = {});

struct LocationScore {
  std::string location;
  std::string city;  // empty when the schema has no city factor
  double location_f1 = 0.0;
  double baseline_f1 = 0.0;
  double ratio = 0.0;
};

// Every location present in `records`, ordered by city (WithinCity) then by
// declared location order.
std::vector<LocationScore> relative_f1_all(std::span<const PredictionRecord> records,
                                           Baseline baseline, const CorpusSchema& schema,
                                           const F1Options& opts = {});

double population_stddev(std::span<const double> values);

struct SeedValue {
  std::int64_t seed = 0;
  double value = 0.0;
  friend bool operator==(const SeedValue&, const SeedValue&) = default;
};

struct MetricCell {
  double value = 0.0;  // mean of per_seed values
  std::vector<SeedValue> per_seed;
  std::size_t n_samples = 0;
};

MetricCell aggregate_seeds(std::vector<SeedValue> per_seed, std::size_t n_samples);

enum class MetricKind { Accuracy, MacroF1, RelativeF1 };

struct TableRequest {
  FactorSelector selector;
  MetricKind metric = MetricKind::Accuracy;
  Baseline baseline = Baseline::Overall;  // RelativeF1 only
  F1Options f1;
  std::vector<std::string> models;  // empty: all models, first-appearance order
  std::vector<std::int64_t> seeds;  // empty: every seed logged for each model
};

struct EvaluationTable {
  FactorSelector selector;
  MetricKind metric = MetricKind::Accuracy;
  std::vector<StratumKey> rows;
  std::vector<std::string> models;
  // cells[row][model]; nullopt marks a stratum with no data for that model.
  std::vector<std::vector<std::optional<MetricCell>>> cells;
  // Population stddev of each model column over its present cells.
  std::vector<std::optional<double>> dispersion;
};

std::optional<double> column_dispersion(const EvaluationTable& table, std::size_t column);

// Each cell is the metric computed per seed on (model, seed, stratum)
// records and then averaged over seeds.
EvaluationTable build_table(std::span<const PredictionRecord> records, const CorpusSchema& schema,
                            const TableRequest& request);

struct LabeledValue {
  std::string label;
  double value = 0.0;
  friend bool operator==(const LabeledValue&, const LabeledValue&) = default;
};

struct BoxSummary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double lower_whisker = 0.0;
  double upper_whisker = 0.0;
  std::vector<LabeledValue> outliers;  // ascending by value
  std::size_t n = 0;
};

// Linear interpolation at position (n-1)*q of an ascending sample.
double quantile_sorted(std::span<const double> sorted, double q);

// Quartiles by quantile_sorted, Tukey whiskers at 1.5 IQR.
BoxSummary box_summary(std::span<const LabeledValue> values);

}  // namespace disagg

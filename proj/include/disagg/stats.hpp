#pragma once
// Rank-based omnibus testing: midranks, Kruskal-Wallis H with tie
// correction, and chi-square upper-tail probabilities.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "disagg/metrics.hpp"
#include "disagg/prediction_log.hpp"

namespace disagg {

class StatsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RankedSample {
  std::vector<double> observations;
  std::vector<double> ranks;            // 1-based midranks, aligned with observations
  std::vector<std::size_t> tie_groups;  // sizes of tie groups with t >= 2, ascending by value
};

RankedSample midranks(std::span<const double> values);

struct KWResult {
  double h = 0.0;
  int df = 0;
  double p = 1.0;
  double tie_correction = 1.0;
  bool all_tied = false;  // every observation equal: H = 0, p = 1
  std::vector<std::size_t> group_sizes;
  std::vector<std::string> group_labels;  // filled by omnibus_factor_test
  // Some group has fewer than 5 observations; the chi-square approximation
  // is rough there.
  bool small_groups = false;
};

KWResult kruskal_wallis(std::span<const std::vector<double>> groups);

// Regularized incomplete gamma functions P(a, x) and Q(a, x) = 1 - P(a, x).
double regularized_gamma_p(double a, double x);
double regularized_gamma_q(double a, double x);

// Upper tail of the chi-square distribution, Q(df/2, x/2).
double chi_square_sf(double x, int df);

enum class ObservationMode {
  Correctness,  // 0/1 per sample
  LocationF1,   // one F1 per location, scoped to the factor level's records
};

// Groups are the factor levels present in the model's records, in schema
// order. An empty `seeds` span means every logged seed; observations from
// all selected seeds are pooled.
KWResult omnibus_factor_test(std::span<const PredictionRecord> records, const std::string& factor,
                             ObservationMode mode, const std::string& model,
                             const CorpusSchema& schema, std::span<const std::int64_t> seeds = {},
                             const F1Options& f1 = {});

// One test per seed instead of pooling.
std::vector<std::pair<std::int64_t, KWResult>> omnibus_factor_test_per_seed(
    std::span<const PredictionRecord> records, const std::string& factor, ObservationMode mode,
    const std::string& model, const CorpusSchema& schema, std::span<const std::int64_t> seeds = {},
    const F1Options& f1 = {});

}  // namespace disagg

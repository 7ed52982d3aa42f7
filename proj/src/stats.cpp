#include "disagg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "disagg/strata.hpp"

namespace disagg {

namespace {

constexpr int kMaxIterations = 300;
constexpr double kEpsilon = 1e-14;
constexpr double kTiny = 1e-300;

double gamma_prefactor(double a, double x) {
  return std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// P(a, x) by its power series; converges quickly for x < a + 1.
double gamma_series(double a, double x) {
  double ap = a;
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n <= kMaxIterations; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kEpsilon) return sum * gamma_prefactor(a, x);
  }
  throw StatsError("incomplete gamma series did not converge");
}

// Q(a, x) by the modified Lentz continued fraction; used for x >= a + 1.
double gamma_continued_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEpsilon) return h * gamma_prefactor(a, x);
  }
  throw StatsError("incomplete gamma continued fraction did not converge");
}

void check_gamma_args(double a, double x) {
  if (!(a > 0.0) || !std::isfinite(a)) throw StatsError("incomplete gamma needs a > 0");
  if (!(x >= 0.0) || !std::isfinite(x)) throw StatsError("incomplete gamma needs finite x >= 0");
}

struct Observations {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> groups;
};

Observations collect(std::span<const PredictionRecord> records, const std::string& factor,
                     ObservationMode mode, const CorpusSchema& schema, const F1Options& f1) {
  if (mode == ObservationMode::LocationF1 && factor == kLocationFactor) {
    throw StatsError("location-f1 observations cannot be grouped by location itself");
  }
  const auto parts = partition(records, {factor}, schema);
  Observations out;
  for (const auto& stratum : parts.strata()) {
    std::vector<double> obs;
    if (mode == ObservationMode::Correctness) {
      for (auto row : stratum.rows) obs.push_back(records[row].correct() ? 1.0 : 0.0);
    } else {
      const auto scope = parts.records(stratum);
      std::set<std::string> present;
      for (const auto& r : scope) present.insert(r.factor(std::string(kLocationFactor)));
      for (const auto& level : schema.find_factor(kLocationFactor)->levels) {
        if (present.contains(level)) obs.push_back(location_f1(scope, level, schema, f1));
      }
    }
    if (obs.empty()) {
      throw StatsError("level '" + stratum.key.label() + "' of factor '" + factor + "' has no observations");
    }
    out.labels.push_back(stratum.key.label());
    out.groups.push_back(std::move(obs));
  }
  return out;
}

std::map<std::int64_t, std::vector<PredictionRecord>> model_runs(
    std::span<const PredictionRecord> records, const std::string& factor, const std::string& model,
    const CorpusSchema& schema, std::span<const std::int64_t> seeds) {
  if (schema.find_factor(factor) == nullptr) throw StatsError("undeclared factor '" + factor + "'");
  std::map<std::int64_t, std::vector<PredictionRecord>> runs;
  for (const auto& r : records) {
    if (r.model_id == model) runs[r.seed].push_back(r);
  }
  if (runs.empty()) throw StatsError("model '" + model + "' is absent from the logs");
  if (!seeds.empty()) {
    std::map<std::int64_t, std::vector<PredictionRecord>> selected;
    for (auto seed : seeds) {
      auto it = runs.find(seed);
      if (it == runs.end()) {
        throw StatsError("model '" + model + "' seed " + std::to_string(seed) + " is absent from the logs");
      }
      selected.insert(*it);
    }
    runs = std::move(selected);
  }
  return runs;
}

KWResult test_observations(Observations obs, const std::string& factor) {
  if (obs.groups.size() < 2) {
    throw StatsError("factor '" + factor + "' has fewer than 2 levels with data");
  }
  auto result = kruskal_wallis(obs.groups);
  result.group_labels = std::move(obs.labels);
  return result;
}

}  // namespace

RankedSample midranks(std::span<const double> values) {
  if (values.empty()) throw StatsError("cannot rank an empty sample");
  for (double v : values) {
    if (!std::isfinite(v)) throw StatsError("cannot rank a non-finite value");
  }
  RankedSample out;
  out.observations.assign(values.begin(), values.end());
  out.ranks.resize(values.size());
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    // Positions i..j hold integer ranks i+1..j+1.
    const double rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) out.ranks[order[k]] = rank;
    if (j > i) out.tie_groups.push_back(j - i + 1);
    i = j + 1;
  }
  return out;
}

KWResult kruskal_wallis(std::span<const std::vector<double>> groups) {
  if (groups.size() < 2) throw StatsError("Kruskal-Wallis needs at least 2 groups");
  std::vector<double> pooled;
  KWResult result;
  for (const auto& g : groups) {
    if (g.empty()) throw StatsError("Kruskal-Wallis group is empty");
    pooled.insert(pooled.end(), g.begin(), g.end());
    result.group_sizes.push_back(g.size());
    if (g.size() < 5) result.small_groups = true;
  }
  const double n = static_cast<double>(pooled.size());
  if (pooled.size() < 3) throw StatsError("Kruskal-Wallis needs at least 3 observations");
  result.df = static_cast<int>(groups.size()) - 1;

  const auto ranked = midranks(pooled);
  double ties = 0.0;
  for (auto t : ranked.tie_groups) {
    const double td = static_cast<double>(t);
    ties += td * td * td - td;
  }
  const double correction = 1.0 - ties / (n * n * n - n);
  if (ranked.tie_groups.size() == 1 && ranked.tie_groups.front() == pooled.size()) {
    result.all_tied = true;
    result.h = 0.0;
    result.p = 1.0;
    result.tie_correction = 1.0;
    return result;
  }

  double sum = 0.0;
  std::size_t offset = 0;
  for (const auto& g : groups) {
    double rank_sum = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) rank_sum += ranked.ranks[offset + k];
    offset += g.size();
    sum += rank_sum * rank_sum / static_cast<double>(g.size());
  }
  const double uncorrected = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
  result.tie_correction = correction;
  result.h = std::max(0.0, uncorrected / correction);
  result.p = chi_square_sf(result.h, result.df);
  return result;
}

double regularized_gamma_p(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_series(a, x);
  return 1.0 - gamma_continued_fraction(a, x);
}

double regularized_gamma_q(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_series(a, x);
  return gamma_continued_fraction(a, x);
}

double chi_square_sf(double x, int df) {
  if (df < 1) throw StatsError("chi-square needs df >= 1");
  if (std::isnan(x)) throw StatsError("chi-square statistic is NaN");
  if (x < 0.0) throw StatsError("chi-square statistic must be non-negative");
  if (std::isinf(x)) return 0.0;
  return regularized_gamma_q(0.5 * df, 0.5 * x);
}

KWResult omnibus_factor_test(std::span<const PredictionRecord> records, const std::string& factor,
                             ObservationMode mode, const std::string& model,
                             const CorpusSchema& schema, std::span<const std::int64_t> seeds,
                             const F1Options& f1) {
  const auto runs = model_runs(records, factor, model, schema, seeds);
  // Pooling keeps levels aligned across seeds by label.
  std::map<std::string, std::vector<double>> pooled;
  for (const auto& [seed, run] : runs) {
    auto obs = collect(run, factor, mode, schema, f1);
    for (std::size_t g = 0; g < obs.groups.size(); ++g) {
      auto& dst = pooled[obs.labels[g]];
      dst.insert(dst.end(), obs.groups[g].begin(), obs.groups[g].end());
    }
  }
  Observations merged;
  for (const auto& level : schema.find_factor(factor)->levels) {
    auto it = pooled.find(level);
    if (it == pooled.end()) continue;
    merged.labels.push_back(level);
    merged.groups.push_back(std::move(it->second));
  }
  return test_observations(std::move(merged), factor);
}

std::vector<std::pair<std::int64_t, KWResult>> omnibus_factor_test_per_seed(
    std::span<const PredictionRecord> records, const std::string& factor, ObservationMode mode,
    const std::string& model, const CorpusSchema& schema, std::span<const std::int64_t> seeds,
    const F1Options& f1) {
  const auto runs = model_runs(records, factor, model, schema, seeds);
  std::vector<std::pair<std::int64_t, KWResult>> out;
  for (const auto& [seed, run] : runs) {
    out.emplace_back(seed, test_observations(collect(run, factor, mode, schema, f1), factor));
  }
  return out;
}

}  // namespace disagg

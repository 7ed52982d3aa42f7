#pragma once
// Deterministic synthetic prediction logs with exact per-stratum accuracy.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "disagg/prediction_log.hpp"
#include "disagg/strata.hpp"

namespace disagg {

class SynthError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// SplitMix64. The exact sequence is part of the log format contract; see
// docs/formats.md.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform-ish index in [0, n) by modulo reduction.
  std::uint64_t below(std::uint64_t n) noexcept { return next() % n; }

 private:
  std::uint64_t state_;
};

struct ErrorModel {
  enum class Kind { Uniform, Confusion };
  Kind kind = Kind::Uniform;
  std::string target;  // Confusion: class that absorbs every error
};

struct BiasCell {
  StratumKey key;  // factor levels fixed for every sample of the cell
  std::size_t n_samples = 0;
  // Target accuracy per model; the "*" entry applies to unlisted models.
  std::map<std::string, double> accuracy;
  ErrorModel error_model;

  double accuracy_for(const std::string& model) const;
};

// Restricts the levels of `child` to those mapped onto the record's level of
// `parent` (e.g. locations nested inside cities).
struct Nesting {
  std::string child;
  std::string parent;
  std::map<std::string, std::string> parent_of;
};

struct BiasSpec {
  CorpusSchema schema;
  std::vector<BiasCell> cells;
  std::vector<std::string> models;
  std::vector<std::int64_t> seeds;
  std::vector<Nesting> nesting;

  // Throws SynthError on any violated constraint.
  void validate() const;

  static BiasSpec from_json(const nlohmann::json& doc,
                            const std::filesystem::path& base_dir = {});
};

BiasSpec load_bias_spec(const std::filesystem::path& path);

// Number of correct records per cell for `model`; throws when n * accuracy
// is not an integer.
std::size_t correct_count(const BiasCell& cell, const std::string& model);

// Records ordered model, seed, cell, sample. Identical (spec, rng_seed)
// always gives identical output.
std::vector<PredictionRecord> generate(const BiasSpec& spec, std::uint64_t rng_seed);

}  // namespace disagg

#pragma once
// Unitary and intersectional partitioning of prediction records.

#include <cstddef>
#include <compare>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "disagg/prediction_log.hpp"

namespace disagg {

class StrataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Ordered factor names. One name is a unitary view, two or more an
// intersectional one; an empty selector is the aggregated view.
using FactorSelector = std::vector<std::string>;

struct StratumKey {
  std::vector<std::pair<std::string, std::string>> levels;

  // Throws StrataError when `factor` is not part of the key.
  const std::string& level(const std::string& factor) const;
  // "paris" for unitary keys, "paris/a" for intersectional ones, "all" when empty.
  std::string label() const;

  friend auto operator<=>(const StratumKey&, const StratumKey&) = default;
  friend bool operator==(const StratumKey&, const StratumKey&) = default;
};

struct Stratum {
  StratumKey key;
  std::vector<std::size_t> rows;  // ascending indices into the source records
};

// Non-owning: the source records must outlive the partition.
class Partition {
 public:
  Partition(FactorSelector selector, std::span<const PredictionRecord> source,
            std::vector<Stratum> strata)
      : selector_(std::move(selector)), source_(source), strata_(std::move(strata)) {}

  const FactorSelector& selector() const noexcept { return selector_; }
  std::span<const PredictionRecord> source() const noexcept { return source_; }
  const std::vector<Stratum>& strata() const noexcept { return strata_; }
  std::size_t size() const noexcept { return strata_.size(); }

  const Stratum* find(const StratumKey& key) const;
  std::vector<PredictionRecord> records(const Stratum& stratum) const;

 private:
  FactorSelector selector_;
  std::span<const PredictionRecord> source_;
  std::vector<Stratum> strata_;
};

void validate_selector(const FactorSelector& selector, const CorpusSchema& schema);

// Strata are ordered by declared level order, first factor major. Empty
// combinations are not stored.
Partition partition(std::span<const PredictionRecord> records, const FactorSelector& selector,
                    const CorpusSchema& schema);

// Collapses a partition onto one of its factors; the result equals
// partition(source, {factor}).
Partition marginalize(const Partition& source, const std::string& factor,
                      const CorpusSchema& schema);

}  // namespace disagg

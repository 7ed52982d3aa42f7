#include "disagg/strata.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace disagg {

const std::string& StratumKey::level(const std::string& factor) const {
  for (const auto& [name, value] : levels) {
    if (name == factor) return value;
  }
  throw StrataError("stratum key has no factor '" + factor + "'");
}

std::string StratumKey::label() const {
  if (levels.empty()) return "all";
  std::string out;
  for (const auto& [name, value] : levels) {
    if (!out.empty()) out += '/';
    out += value;
  }
  return out;
}

const Stratum* Partition::find(const StratumKey& key) const {
  auto it = std::find_if(strata_.begin(), strata_.end(),
                         [&](const Stratum& s) { return s.key == key; });
  return it == strata_.end() ? nullptr : &*it;
}

std::vector<PredictionRecord> Partition::records(const Stratum& stratum) const {
  std::vector<PredictionRecord> out;
  out.reserve(stratum.rows.size());
  for (auto row : stratum.rows) out.push_back(source_[row]);
  return out;
}

void validate_selector(const FactorSelector& selector, const CorpusSchema& schema) {
  std::set<std::string> seen;
  for (const auto& name : selector) {
    if (schema.find_factor(name) == nullptr) {
      throw StrataError("undeclared factor '" + name + "'");
    }
    if (!seen.insert(name).second) throw StrataError("factor '" + name + "' selected twice");
  }
}

Partition partition(std::span<const PredictionRecord> records, const FactorSelector& selector,
                    const CorpusSchema& schema) {
  validate_selector(selector, schema);
  // Level indices give the schema ordering directly.
  std::map<std::vector<std::size_t>, std::vector<std::size_t>> groups;
  std::vector<std::size_t> idx(selector.size());
  for (std::size_t row = 0; row < records.size(); ++row) {
    for (std::size_t k = 0; k < selector.size(); ++k) {
      const auto& value = records[row].factor(selector[k]);
      auto level = schema.level_index(selector[k], value);
      if (!level) {
        throw StrataError("record '" + records[row].sample_id + "' has undeclared level '" + value +
                          "' for factor '" + selector[k] + "'");
      }
      idx[k] = *level;
    }
    groups[idx].push_back(row);
  }

  std::vector<Stratum> strata;
  strata.reserve(groups.size());
  for (auto& [levels, rows] : groups) {
    Stratum s;
    for (std::size_t k = 0; k < selector.size(); ++k) {
      s.key.levels.emplace_back(selector[k], schema.find_factor(selector[k])->levels[levels[k]]);
    }
    s.rows = std::move(rows);
    strata.push_back(std::move(s));
  }
  return Partition(selector, records, std::move(strata));
}

Partition marginalize(const Partition& source, const std::string& factor,
                      const CorpusSchema& schema) {
  const auto& sel = source.selector();
  if (std::find(sel.begin(), sel.end(), factor) == sel.end()) {
    throw StrataError("cannot marginalize onto '" + factor + "': not in the partition selector");
  }
  std::map<std::size_t, std::vector<std::size_t>> merged;
  for (const auto& s : source.strata()) {
    const auto& value = s.key.level(factor);
    auto& rows = merged[*schema.level_index(factor, value)];
    rows.insert(rows.end(), s.rows.begin(), s.rows.end());
  }
  std::vector<Stratum> strata;
  const auto& levels = schema.find_factor(factor)->levels;
  for (auto& [level, rows] : merged) {
    std::sort(rows.begin(), rows.end());
    strata.push_back({StratumKey{{{factor, levels[level]}}}, std::move(rows)});
  }
  return Partition({factor}, source.source(), std::move(strata));
}

}  // namespace disagg

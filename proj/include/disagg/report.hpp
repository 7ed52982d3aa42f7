#pragma once
// Markdown / CSV / JSON rendering of evaluation tables, box summaries and
// significance tests. Column orders are documented in docs/formats.md.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "disagg/metrics.hpp"
#include "disagg/stats.hpp"

namespace disagg {

enum class Format { Markdown, Csv, Json };
enum class BoldAxis { Off, Row, Column };

struct RenderOptions {
  Format format = Format::Markdown;
  int decimals = 1;
  bool percent = true;
  BoldAxis bold_best = BoldAxis::Off;
  std::string absent_marker = "—";
};

// Shortest round-trip decimal of `value`, rounded half-up (away from zero)
// to `decimals` places on that decimal string.
std::string format_half_up(double value, int decimals);

struct BoldMask {
  std::vector<std::vector<bool>> cells;  // [row][model]
  std::vector<bool> dispersion;          // per model
};

// Best = maximum cell value, minimum dispersion. Ties are all marked;
// comparison uses unrounded values.
BoldMask best_cells(const EvaluationTable& table, BoldAxis axis);

std::string render_table(const EvaluationTable& table, const RenderOptions& opts);

struct BoxGroup {
  std::vector<std::pair<std::string, std::string>> group;  // e.g. {model, CNN6}, {city, paris}
  BoxSummary box;
};

std::string render_box_json(std::span<const BoxGroup> groups);

struct SignificanceRow {
  std::string model;
  std::string factor;
  std::optional<std::int64_t> seed;  // set for per-seed tests
  KWResult result;
};

// p in fixed notation, or scientific below 1e-4.
std::string format_p_value(double p);

std::string render_significance(std::span<const SignificanceRow> rows, double alpha,
                                const std::string& observation_mode, Format format);

}  // namespace disagg

#include "disagg/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace disagg {

namespace {

using ojson = nlohmann::ordered_json;

const char* metric_name(MetricKind metric) {
  switch (metric) {
    case MetricKind::Accuracy:
      return "accuracy";
    case MetricKind::MacroF1:
      return "macro_f1";
    case MetricKind::RelativeF1:
      return "relative_f1";
  }
  return "unknown";
}

std::string display(double value, const RenderOptions& opts) {
  return format_half_up(opts.percent ? value * 100.0 : value, opts.decimals);
}

std::string emphasize(const std::string& text, bool bold, Format format) {
  if (!bold || format != Format::Markdown) return text;
  return "**" + text + "**";
}

void markdown_row(std::ostringstream& out, const std::vector<std::string>& cells) {
  out << '|';
  for (const auto& c : cells) out << ' ' << c << " |";
  out << '\n';
}

void csv_row(std::ostringstream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) out << ',';
    out << cells[i];
  }
  out << '\n';
}

std::string dump(const ojson& doc) { return doc.dump(2) + "\n"; }

std::string shortest(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ec == std::errc{} ? end : buf);
}

}  // namespace

std::string format_half_up(double value, int decimals) {
  if (decimals < 0) decimals = 0;
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value < 0 ? "-inf" : "inf";

  char buf[512];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed);
  std::string text(buf, ec == std::errc{} ? end : buf);
  bool negative = false;
  if (!text.empty() && text.front() == '-') {
    negative = true;
    text.erase(0, 1);
  }
  const auto point = text.find('.');
  std::string int_part = point == std::string::npos ? text : text.substr(0, point);
  std::string frac_part = point == std::string::npos ? "" : text.substr(point + 1);

  const auto keep = static_cast<std::size_t>(decimals);
  bool round_up = frac_part.size() > keep && frac_part[keep] >= '5';
  frac_part.resize(keep, '0');

  std::string digits = int_part + frac_part;
  if (round_up) {
    std::size_t i = digits.size();
    while (i > 0) {
      --i;
      if (digits[i] == '9') {
        digits[i] = '0';
      } else {
        ++digits[i];
        round_up = false;
        break;
      }
    }
    if (round_up) digits.insert(digits.begin(), '1');
  }
  std::string out = digits.substr(0, digits.size() - keep);
  if (keep > 0) out += "." + digits.substr(digits.size() - keep);
  const bool zero = std::all_of(digits.begin(), digits.end(), [](char c) { return c == '0'; });
  return negative && !zero ? "-" + out : out;
}

BoldMask best_cells(const EvaluationTable& table, BoldAxis axis) {
  BoldMask mask;
  const std::size_t rows = table.rows.size();
  const std::size_t cols = table.models.size();
  mask.cells.assign(rows, std::vector<bool>(cols, false));
  mask.dispersion.assign(cols, false);
  if (axis == BoldAxis::Off) return mask;

  if (axis == BoldAxis::Row) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::optional<double> best;
      for (std::size_t c = 0; c < cols; ++c) {
        if (const auto& cell = table.cells[r][c]; cell && (!best || cell->value > *best)) best = cell->value;
      }
      for (std::size_t c = 0; c < cols; ++c) {
        const auto& cell = table.cells[r][c];
        mask.cells[r][c] = cell && best && cell->value == *best;
      }
    }
    std::optional<double> lowest;
    for (const auto& d : table.dispersion) {
      if (d && (!lowest || *d < *lowest)) lowest = d;
    }
    for (std::size_t c = 0; c < cols; ++c) {
      mask.dispersion[c] = table.dispersion[c] && lowest && *table.dispersion[c] == *lowest;
    }
  } else {
    for (std::size_t c = 0; c < cols; ++c) {
      std::optional<double> best;
      for (std::size_t r = 0; r < rows; ++r) {
        if (const auto& cell = table.cells[r][c]; cell && (!best || cell->value > *best)) best = cell->value;
      }
      for (std::size_t r = 0; r < rows; ++r) {
        const auto& cell = table.cells[r][c];
        mask.cells[r][c] = cell && best && cell->value == *best;
      }
    }
  }
  return mask;
}

std::string render_table(const EvaluationTable& table, const RenderOptions& opts) {
  const auto mask = best_cells(table, opts.bold_best);
  const bool aggregated = table.selector.empty();

  if (opts.format == Format::Json) {
    ojson doc;
    doc["metric"] = metric_name(table.metric);
    doc["selector"] = table.selector;
    doc["models"] = table.models;
    doc["rows"] = ojson::array();
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      ojson row;
      row["key"] = ojson::object();
      for (const auto& [factor, level] : table.rows[r].levels) row["key"][factor] = level;
      row["cells"] = ojson::array();
      for (std::size_t c = 0; c < table.models.size(); ++c) {
        const auto& cell = table.cells[r][c];
        if (!cell) {
          row["cells"].push_back(nullptr);
          continue;
        }
        ojson j;
        j["model"] = table.models[c];
        j["value"] = cell->value;
        j["display"] = display(cell->value, opts);
        j["n"] = cell->n_samples;
        j["per_seed"] = ojson::array();
        for (const auto& sv : cell->per_seed) j["per_seed"].push_back({{"seed", sv.seed}, {"value", sv.value}});
        j["bold"] = static_cast<bool>(mask.cells[r][c]);
        row["cells"].push_back(std::move(j));
      }
      doc["rows"].push_back(std::move(row));
    }
    doc["dispersion"] = ojson::array();
    for (std::size_t c = 0; c < table.models.size(); ++c) {
      const auto& d = table.dispersion[c];
      if (!d || aggregated) {
        doc["dispersion"].push_back(nullptr);
        continue;
      }
      doc["dispersion"].push_back({{"model", table.models[c]},
                                   {"value", *d},
                                   {"display", display(*d, opts)},
                                   {"bold", static_cast<bool>(mask.dispersion[c])}});
    }
    return dump(doc);
  }

  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& cells) {
    if (opts.format == Format::Markdown) {
      markdown_row(out, cells);
    } else {
      csv_row(out, cells);
    }
  };

  std::vector<std::string> header = table.selector;
  if (aggregated) header.push_back("stratum");
  const std::size_t label_cols = header.size();
  header.insert(header.end(), table.models.begin(), table.models.end());
  emit(header);
  if (opts.format == Format::Markdown) emit(std::vector<std::string>(header.size(), "---"));

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    std::vector<std::string> cells;
    if (aggregated) cells.push_back("all");
    for (const auto& [factor, level] : table.rows[r].levels) cells.push_back(level);
    for (std::size_t c = 0; c < table.models.size(); ++c) {
      const auto& cell = table.cells[r][c];
      cells.push_back(cell ? emphasize(display(cell->value, opts), mask.cells[r][c], opts.format)
                           : opts.absent_marker);
    }
    emit(cells);
  }

  if (!aggregated) {
    std::vector<std::string> cells(label_cols, "");
    cells[0] = "σ";
    for (std::size_t c = 0; c < table.models.size(); ++c) {
      const auto& d = table.dispersion[c];
      cells.push_back(d ? emphasize(display(*d, opts), mask.dispersion[c], opts.format)
                        : opts.absent_marker);
    }
    emit(cells);
  }
  return out.str();
}

std::string render_box_json(std::span<const BoxGroup> groups) {
  ojson doc = ojson::array();
  for (const auto& g : groups) {
    ojson j;
    j["group"] = ojson::object();
    for (const auto& [k, v] : g.group) j["group"][k] = v;
    j["median"] = g.box.median;
    j["q1"] = g.box.q1;
    j["q3"] = g.box.q3;
    j["lo_whisker"] = g.box.lower_whisker;
    j["hi_whisker"] = g.box.upper_whisker;
    j["outliers"] = ojson::array();
    for (const auto& o : g.box.outliers) j["outliers"].push_back({{"label", o.label}, {"value", o.value}});
    j["n"] = g.box.n;
    doc.push_back(std::move(j));
  }
  return dump(doc);
}

std::string format_p_value(double p) {
  char buf[64];
  if (p < 1e-4) {
    std::snprintf(buf, sizeof buf, "%.3e", p);
  } else {
    std::snprintf(buf, sizeof buf, "%.4f", p);
  }
  return buf;
}

std::string render_significance(std::span<const SignificanceRow> rows, double alpha,
                                const std::string& observation_mode, Format format) {
  auto verdict = [&](const KWResult& r) { return r.p < alpha ? "significant" : "not significant"; };
  auto h_text = [](double h) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", h);
    return std::string(buf);
  };
  auto total = [](const KWResult& r) {
    std::size_t n = 0;
    for (auto s : r.group_sizes) n += s;
    return n;
  };
  const bool per_seed = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.seed.has_value(); });

  if (format == Format::Json) {
    ojson doc;
    doc["test"] = "kruskal-wallis";
    doc["observations"] = observation_mode;
    doc["alpha"] = alpha;
    doc["results"] = ojson::array();
    for (const auto& row : rows) {
      ojson j;
      j["model"] = row.model;
      j["factor"] = row.factor;
      if (row.seed) j["seed"] = *row.seed;
      j["groups"] = row.result.group_labels;
      j["group_sizes"] = row.result.group_sizes;
      j["h"] = row.result.h;
      j["df"] = row.result.df;
      j["p"] = row.result.p;
      j["tie_correction"] = row.result.tie_correction;
      j["significant"] = row.result.p < alpha;
      j["small_groups"] = row.result.small_groups;
      doc["results"].push_back(std::move(j));
    }
    return dump(doc);
  }

  std::ostringstream out;
  std::vector<std::string> header{"model", "factor"};
  if (per_seed) header.push_back("seed");
  for (const char* h : {"groups", "N", "H", "df", "p", "verdict", "note"}) header.push_back(h);
  auto emit = [&](const std::vector<std::string>& cells) {
    if (format == Format::Markdown) {
      markdown_row(out, cells);
    } else {
      csv_row(out, cells);
    }
  };

  if (format == Format::Markdown) {
    out << "Kruskal-Wallis omnibus tests (observations: " << observation_mode
        << ", alpha = " << shortest(alpha) << ")\n\n";
  } else {
    out << "# observations=" << observation_mode << ",alpha=" << shortest(alpha) << '\n';
  }
  emit(header);
  if (format == Format::Markdown) emit(std::vector<std::string>(header.size(), "---"));
  for (const auto& row : rows) {
    std::vector<std::string> cells{row.model, row.factor};
    if (per_seed) cells.push_back(row.seed ? std::to_string(*row.seed) : "");
    cells.push_back(std::to_string(row.result.group_sizes.size()));
    cells.push_back(std::to_string(total(row.result)));
    cells.push_back(h_text(row.result.h));
    cells.push_back(std::to_string(row.result.df));
    cells.push_back(format_p_value(row.result.p));
    cells.push_back(verdict(row.result));
    cells.push_back(row.result.small_groups ? "group size < 5" : "");
    emit(cells);
  }
  return out.str();
}

}  // namespace disagg

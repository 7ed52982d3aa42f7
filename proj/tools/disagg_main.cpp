// disagg: disaggregated evaluation of classifier prediction logs.
//
// Exit status: 0 success, 1 data error, 2 usage or configuration error.
// Diagnostics go to stderr; tables and documents go to stdout or --out.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "disagg/metrics.hpp"
#include "disagg/prediction_log.hpp"
#include "disagg/report.hpp"
#include "disagg/stats.hpp"
#include "disagg/strata.hpp"
#include "disagg/synth.hpp"

namespace fs = std::filesystem;
using namespace disagg;

namespace {

// Usage and configuration problems (exit 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputOptions {
  std::string predictions;
  std::string schema;
  std::string metadata;
  std::vector<std::string> models;
  std::vector<std::int64_t> seeds;
  bool strict = false;
};

struct RenderFlags {
  std::string format = "markdown";
  int decimals = 1;
  std::optional<bool> percent;
  std::string bold_best = "off";
  std::string absent_marker = "—";
  std::string out;
};

struct F1Flags {
  std::string overall = "macro";
  std::string precision_scope = "scope";
};

void add_input_options(CLI::App& cmd, InputOptions& in) {
  cmd.add_option("--predictions", in.predictions, "Prediction log (CSV)")->required();
  cmd.add_option("--schema", in.schema, "Corpus schema (JSON)")->required();
  cmd.add_option("--metadata", in.metadata, "Metadata table joined on sample_id (CSV)");
  cmd.add_option("--models", in.models, "Models to evaluate (default: all, log order)");
  cmd.add_option("--seeds", in.seeds, "Seeds to use (default: all logged seeds)");
  cmd.add_flag("--strict", in.strict, "Fail when locations disagree with the location->class map");
}

void add_render_options(CLI::App& cmd, RenderFlags& r, bool table) {
  cmd.add_option("--format", r.format, "Output format")
      ->check(CLI::IsMember({"markdown", "csv", "json"}))
      ->capture_default_str();
  if (table) {
    cmd.add_option("--decimals", r.decimals, "Decimals in rendered values")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    cmd.add_flag("--percent,!--no-percent", r.percent,
                 "Scale values by 100 (default: on for accuracy and macro-F1)");
    cmd.add_option("--bold-best", r.bold_best, "Mark best values along an axis")
        ->check(CLI::IsMember({"off", "row", "column"}))
        ->capture_default_str();
    cmd.add_option("--absent-marker", r.absent_marker, "Text for strata without data");
  }
  cmd.add_option("--out", r.out, "Output file (default: stdout)");
}

void add_f1_options(CLI::App& cmd, F1Flags& f) {
  cmd.add_option("--overall-f1", f.overall, "Overall F1 used as normalizer")
      ->check(CLI::IsMember({"macro", "micro"}))
      ->capture_default_str();
  cmd.add_option("--precision-scope", f.precision_scope,
                 "Precision of a location's class: whole normalization scope or location only")
      ->check(CLI::IsMember({"scope", "location"}))
      ->capture_default_str();
}

F1Options to_f1(const F1Flags& f) {
  F1Options o;
  o.overall = f.overall == "micro" ? OverallF1::Micro : OverallF1::Macro;
  o.precision_scope =
      f.precision_scope == "location" ? PrecisionScope::LocationOnly : PrecisionScope::NormalizationScope;
  return o;
}

Format to_format(const std::string& name) {
  if (name == "csv") return Format::Csv;
  if (name == "json") return Format::Json;
  return Format::Markdown;
}

Baseline to_baseline(const std::string& name) {
  return name == "within-city" ? Baseline::WithinCity : Baseline::Overall;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) return;
  if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " file not found: " + path);
}

CorpusSchema read_schema(const std::string& path) {
  require_file(path, "schema");
  try {
    return load_schema(path);
  } catch (const SchemaError& e) {
    throw ConfigError(e.what());
  }
}

struct Corpus {
  CorpusSchema schema;
  std::vector<PredictionRecord> records;
};

Corpus read_corpus(const InputOptions& in) {
  require_file(in.predictions, "predictions");
  require_file(in.metadata, "metadata");
  auto schema = read_schema(in.schema);
  std::optional<MetadataTable> metadata;
  if (!in.metadata.empty()) metadata = load_metadata(in.metadata, schema);
  auto records = load_predictions(in.predictions, schema, metadata ? &*metadata : nullptr);

  if (schema.has_location_factor()) {
    const auto report = validate_location_consistency(records, schema);
    if (!report.consistent()) {
      std::string list;
      for (const auto& l : report.inconsistent_locations) list += (list.empty() ? "" : ", ") + l;
      if (in.strict) throw LoadError(0, "locations inconsistent with location_class_map: " + list);
      std::cerr << "disagg: warning: locations inconsistent with location_class_map: " << list << '\n';
    }
  }
  return {std::move(schema), std::move(records)};
}

std::vector<std::string> model_order(const std::vector<PredictionRecord>& records,
                                     const std::vector<std::string>& requested) {
  if (!requested.empty()) return requested;
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (seen.insert(r.model_id).second) out.push_back(r.model_id);
  }
  return out;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw ConfigError("cannot write output file " + out_path);
  out << text;
}

RenderOptions to_render(const RenderFlags& r, bool percent_default) {
  RenderOptions o;
  o.format = to_format(r.format);
  o.decimals = r.decimals;
  o.percent = r.percent.value_or(percent_default);
  o.bold_best = r.bold_best == "row" ? BoldAxis::Row
                : r.bold_best == "column" ? BoldAxis::Column
                                          : BoldAxis::Off;
  o.absent_marker = r.absent_marker;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disaggregated evaluation of classifier prediction logs"};
  app.set_config("--config", "", "TOML/INI config file; command-line flags override it");
  app.require_subcommand(1);

  // evaluate
  InputOptions eval_in;
  RenderFlags eval_render;
  F1Flags eval_f1;
  std::vector<std::string> eval_factors;
  std::string eval_metric = "accuracy";
  std::string eval_baseline = "overall";
  auto* evaluate = app.add_subcommand("evaluate", "Aggregated, unitary or intersectional metric table");
  add_input_options(*evaluate, eval_in);
  evaluate->add_option("--factor", eval_factors, "Stratification factor (repeat for intersections)");
  evaluate->add_option("--metric", eval_metric, "Cell metric")
      ->check(CLI::IsMember({"accuracy", "macro-f1", "relative-f1"}))
      ->capture_default_str();
  evaluate->add_option("--baseline", eval_baseline, "Relative F1 normalizer")
      ->check(CLI::IsMember({"overall", "within-city"}))
      ->capture_default_str();
  add_f1_options(*evaluate, eval_f1);
  add_render_options(*evaluate, eval_render, true);

  // locations
  InputOptions loc_in;
  RenderFlags loc_render;
  F1Flags loc_f1;
  std::string loc_baseline = "overall";
  auto* locations = app.add_subcommand("locations", "Box summaries of relative per-location F1 (JSON)");
  add_input_options(*locations, loc_in);
  locations->add_option("--baseline", loc_baseline, "Normalizer")
      ->check(CLI::IsMember({"overall", "within-city"}))
      ->capture_default_str();
  add_f1_options(*locations, loc_f1);
  locations->add_option("--out", loc_render.out, "Output file (default: stdout)");

  // kwtest
  InputOptions kw_in;
  RenderFlags kw_render;
  F1Flags kw_f1;
  std::vector<std::string> kw_factors;
  std::string kw_obs;
  double kw_alpha = 0.05;
  bool kw_per_seed = false;
  auto* kwtest = app.add_subcommand("kwtest", "Kruskal-Wallis omnibus test per model and factor");
  add_input_options(*kwtest, kw_in);
  kwtest->add_option("--factor", kw_factors, "Factor to test (repeatable)")->required();
  kwtest->add_option("--obs", kw_obs, "Observation unit")
      ->check(CLI::IsMember({"correctness", "location-f1"}))
      ->required();
  kwtest->add_option("--alpha", kw_alpha, "Significance level")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  kwtest->add_flag("--per-seed", kw_per_seed, "One test per seed instead of pooling seeds");
  add_f1_options(*kwtest, kw_f1);
  add_render_options(*kwtest, kw_render, false);

  // synth
  std::string synth_spec;
  std::string synth_out;
  std::string synth_schema_out;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic prediction log from a bias spec");
  synth->add_option("--spec", synth_spec, "Bias spec (JSON)")->required();
  synth->add_option("--seed", synth_seed, "Generator seed")->required();
  synth->add_option("--out", synth_out, "Output log (default: stdout)");
  synth->add_option("--schema-out", synth_schema_out, "Also write the spec's schema here");

  // validate
  InputOptions val_in;
  auto* validate = app.add_subcommand("validate", "Load a log and check location/class consistency");
  add_input_options(*validate, val_in);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*evaluate) {
      auto corpus = read_corpus(eval_in);
      TableRequest req;
      req.selector = eval_factors;
      req.models = eval_in.models;
      req.seeds = eval_in.seeds;
      req.f1 = to_f1(eval_f1);
      req.baseline = to_baseline(eval_baseline);
      req.metric = eval_metric == "macro-f1"      ? MetricKind::MacroF1
                   : eval_metric == "relative-f1" ? MetricKind::RelativeF1
                                                  : MetricKind::Accuracy;
      try {
        validate_selector(req.selector, corpus.schema);
      } catch (const StrataError& e) {
        throw ConfigError(e.what());
      }
      if (corpus.records.empty()) throw LoadError(0, "prediction log has no data rows");
      const auto table = build_table(corpus.records, corpus.schema, req);
      const auto opts = to_render(eval_render, req.metric != MetricKind::RelativeF1);
      emit(render_table(table, opts), eval_render.out);
    } else if (*locations) {
      auto corpus = read_corpus(loc_in);
      if (!corpus.schema.has_location_factor()) throw ConfigError("schema declares no location factor");
      if (corpus.records.empty()) throw LoadError(0, "prediction log has no data rows");
      const auto baseline = to_baseline(loc_baseline);
      TableRequest req;
      req.metric = MetricKind::RelativeF1;
      req.baseline = baseline;
      req.f1 = to_f1(loc_f1);
      req.models = loc_in.models;
      req.seeds = loc_in.seeds;
      req.selector = {std::string(kLocationFactor)};
      if (baseline == Baseline::WithinCity) req.selector.insert(req.selector.begin(), std::string(kCityFactor));
      const auto table = build_table(corpus.records, corpus.schema, req);

      std::vector<BoxGroup> groups;
      for (std::size_t m = 0; m < table.models.size(); ++m) {
        // city (or "") -> labeled location ratios, in table row order
        std::vector<std::pair<std::string, std::vector<LabeledValue>>> buckets;
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
          const auto& cell = table.cells[r][m];
          if (!cell) continue;
          const auto& key = table.rows[r];
          const std::string city = baseline == Baseline::WithinCity ? key.level(std::string(kCityFactor)) : "";
          if (buckets.empty() || buckets.back().first != city) buckets.emplace_back(city, std::vector<LabeledValue>{});
          buckets.back().second.push_back({key.level(std::string(kLocationFactor)), cell->value});
        }
        for (const auto& [city, values] : buckets) {
          BoxGroup g;
          g.group.emplace_back("model", table.models[m]);
          if (baseline == Baseline::WithinCity) g.group.emplace_back(std::string(kCityFactor), city);
          g.box = box_summary(values);
          groups.push_back(std::move(g));
        }
      }
      emit(render_box_json(groups), loc_render.out);
    } else if (*kwtest) {
      auto corpus = read_corpus(kw_in);
      for (const auto& f : kw_factors) {
        if (corpus.schema.find_factor(f) == nullptr) throw ConfigError("undeclared factor '" + f + "'");
      }
      const auto mode = kw_obs == "location-f1" ? ObservationMode::LocationF1 : ObservationMode::Correctness;
      const auto f1 = to_f1(kw_f1);
      std::vector<SignificanceRow> rows;
      for (const auto& model : model_order(corpus.records, kw_in.models)) {
        for (const auto& factor : kw_factors) {
          if (kw_per_seed) {
            for (auto& [seed, res] :
                 omnibus_factor_test_per_seed(corpus.records, factor, mode, model, corpus.schema, kw_in.seeds, f1)) {
              rows.push_back({model, factor, seed, std::move(res)});
            }
          } else {
            rows.push_back({model, factor, std::nullopt,
                            omnibus_factor_test(corpus.records, factor, mode, model, corpus.schema, kw_in.seeds, f1)});
          }
          if (rows.back().result.small_groups) {
            std::cerr << "disagg: warning: " << model << "/" << factor
                      << ": a group has fewer than 5 observations; chi-square approximation is rough\n";
          }
        }
      }
      if (rows.empty()) throw LoadError(0, "prediction log has no data rows");
      emit(render_significance(rows, kw_alpha, kw_obs, to_format(kw_render.format)), kw_render.out);
    } else if (*synth) {
      BiasSpec spec = [&] {
        require_file(synth_spec, "bias spec");
        try {
          return load_bias_spec(synth_spec);
        } catch (const SynthError& e) {
          throw ConfigError(e.what());
        }
      }();
      const auto records = generate(spec, *synth_seed);
      std::ostringstream log;
      write_predictions(log, records, spec.schema);
      emit(log.str(), synth_out);
      if (!synth_schema_out.empty()) emit(spec.schema.to_json().dump(2) + "\n", synth_schema_out);
      for (const auto& cell : spec.cells) {
        std::cerr << "cell " << cell.key.label() << ": n=" << cell.n_samples;
        for (const auto& model : spec.models) std::cerr << ' ' << model << "=" << correct_count(cell, model);
        std::cerr << " correct per seed\n";
      }
      std::cerr << "wrote " << records.size() << " records (" << spec.models.size() << " models x "
                << spec.seeds.size() << " seeds)\n";
    } else if (*validate) {
      auto corpus = read_corpus(val_in);
      std::set<std::string> models;
      std::set<std::int64_t> seeds;
      for (const auto& r : corpus.records) {
        models.insert(r.model_id);
        seeds.insert(r.seed);
      }
      std::ostringstream out;
      out << "records: " << corpus.records.size() << '\n'
          << "models: " << models.size() << '\n'
          << "seeds: " << seeds.size() << '\n';
      if (corpus.schema.has_location_factor()) {
        const auto report = validate_location_consistency(corpus.records, corpus.schema);
        out << "distinct locations: " << report.distinct_locations << '\n'
            << "inconsistent locations: " << report.inconsistent_locations.size() << '\n';
        for (const auto& l : report.inconsistent_locations) out << "  " << l << '\n';
      }
      emit(out.str(), "");
    }
  } catch (const ConfigError& e) {
    std::cerr << "disagg: error: " << e.what() << '\n';
    return 2;
  } catch (const LoadError& e) {
    std::cerr << "disagg: error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "disagg: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

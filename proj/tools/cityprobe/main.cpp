// cityprobe - extract city/region knowledge from chat-completion LLMs,
// train regressors on the extracted features, and diagnose guessing.

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cityprobe/csv.hpp"
#include "cityprobe/dataset.hpp"
#include "cityprobe/diagnostics.hpp"
#include "cityprobe/error.hpp"
#include "cityprobe/features.hpp"
#include "cityprobe/gateway.hpp"
#include "cityprobe/ml.hpp"
#include "cityprobe/parsing.hpp"
#include "cityprobe/prompting.hpp"
#include "cityprobe/report.hpp"

namespace {

using namespace cityprobe;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitParseHeavy = 2;  // more than 20% of places dropped
constexpr int kExitError = 3;

struct GlobalFlags {
  std::string mode = "replay";
  std::string store;
  std::string lang = "en";
  uint64_t seed = 0;
  std::string out;
  std::string templates_dir;
};

struct ProviderFlags {
  ProviderConfig cfg;

  void attach(CLI::App* cmd) {
    cmd->add_option("--model", cfg.model_name, "Model name sent to the provider");
    cmd->add_option("--temperature", cfg.temperature, "Sampling temperature");
    cmd->add_option("--base-url", cfg.base_url, "Chat-completion endpoint base URL");
    cmd->add_option("--max-tokens", cfg.max_tokens, "Completion token limit");
    cmd->add_option("--parallel", cfg.max_parallel, "Maximum in-flight requests")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--retries", cfg.retries, "Retries on 429/5xx");
    cmd->add_option("--timeout", cfg.timeout_seconds, "Request timeout in seconds");
    cmd->add_option("--api-key-env", cfg.api_key_env, "Environment variable holding the API key");
  }
};

std::vector<RegressorSpec> parse_models(const std::string& csv_list, uint64_t seed) {
  std::vector<RegressorSpec> specs;
  std::string token;
  for (char c : csv_list + ",") {
    if (c == ',') {
      if (!token.empty()) {
        RegressorSpec spec = RegressorSpec::from_name(token);
        spec.seed = seed;
        specs.push_back(spec);
        token.clear();
      }
    } else {
      token += c;
    }
  }
  if (specs.empty()) fail(errc::invalid_argument, "--models is empty");
  return specs;
}

int exit_code_for(double drop_fraction) {
  return drop_fraction > 0.2 ? kExitParseHeavy : kExitOk;
}

RunOptions base_run_options(const GlobalFlags& globals) {
  RunOptions options;
  options.mode = query_mode_from_flag(globals.mode);
  options.store_path = globals.store;
  options.language = language_from_flag(globals.lang);
  options.fold_seed = globals.seed;
  options.projection_seed = globals.seed;
  options.templates_dir = globals.templates_dir;
  options.out_dir = globals.out;
  return options;
}

// --- subcommand bodies ------------------------------------------------------

int cmd_ingest(const GlobalFlags& globals, const std::string& task_path,
               const std::string& data_path, bool normalize) {
  TaskSpec task = load_task_spec(task_path);
  TargetTable table = load_task(data_path, task);
  if (normalize) {
    if (task.level != TaskLevel::region) {
      fail(errc::invalid_argument, "--normalize applies to region-level tasks only");
    }
    table = normalize_region_targets(table);
  }
  if (!globals.out.empty()) write_targets(globals.out, table);

  double lo = table.entries.front().second, hi = lo;
  for (const auto& [p, v] : table.entries) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  json summary{{"task_id", task.task_id},
               {"rows", table.size()},
               {"dropped_rows", table.dropped_rows},
               {"min", lo},
               {"max", hi},
               {"normalized", normalize}};
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

std::string run_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

int cmd_run(const GlobalFlags& globals, const ProviderFlags& provider, Method method,
            const std::string& task_path, const std::string& data_path,
            const std::string& schema_path, const std::string& manifest_path, int k,
            const std::string& models, bool normalize, int repeats) {
  TaskSpec task = load_task_spec(task_path);
  RunOptions options = base_run_options(globals);
  options.targets_csv = data_path;
  options.schema_json = schema_path;
  options.manifest_json = manifest_path;
  options.k = k;
  options.normalize = normalize;
  options.repeats = repeats;
  if (!models.empty()) options.models = parse_models(models, globals.seed);
  if (options.out_dir.empty()) {
    options.out_dir =
        "runs/" + task.task_id + "/" + std::string(to_string(method)) + "/" + run_timestamp();
  }

  RunOutcome outcome = run_method(task, method, provider.cfg, options);
  std::cout << eval_to_json(outcome.eval);
  std::cerr << "artifacts under " << options.out_dir << "\n";
  return exit_code_for(outcome.drop_fraction);
}

int cmd_identify(const GlobalFlags& globals, const ProviderFlags& provider,
                 const std::string& task_path, int count, const std::string& schema_out) {
  TaskSpec task = load_task_spec(task_path);
  const TemplateSet templates =
      globals.templates_dir.empty()
          ? TemplateSet::builtin(language_from_flag(globals.lang))
          : TemplateSet::load(globals.templates_dir, language_from_flag(globals.lang));
  RenderedPrompt prompt = build_identification_prompt(task, count, templates);

  QueryMode mode = query_mode_from_flag(globals.mode);
  std::unique_ptr<RecordStore> store;
  if (mode != QueryMode::live) {
    if (globals.store.empty()) fail(errc::invalid_argument, "record/replay needs --store");
    store = std::make_unique<RecordStore>(globals.store);
  }
  QueryRecord record = query(prompt, provider.cfg, store.get(), mode);

  double lo = 0.0, hi = 10.0;
  if (task.scale_hint) {
    lo = task.scale_hint->first;
    hi = task.scale_hint->second;
  }
  FeatureSchema schema = parse_schema(record.raw_response, count, lo, hi);
  save_schema(schema_out, schema);
  std::cout << "wrote " << schema_out << " with " << schema.features.size() << " features\n";
  return kExitOk;
}

int cmd_imp_features(const GlobalFlags& globals, const std::string& manifest_path, size_t out_dim,
                     const std::string& features_out) {
  std::vector<HiddenStateTensor> tensors = load_hidden_states(manifest_path);
  FeatureMatrix matrix = assemble_implicit(tensors, out_dim, globals.seed);
  save_feature_matrix(features_out, matrix);
  std::cout << "wrote " << features_out << " (" << matrix.rows() << " x " << matrix.cols()
            << ")\n";
  return kExitOk;
}

int cmd_train(const GlobalFlags& globals, const std::string& features_path,
              const std::string& targets_path, int k, const std::string& models,
              const std::string& task_id, const std::string& eval_out) {
  TaskSpec task;
  task.task_id = task_id;
  task.target_name = task_id;
  TargetTable targets = load_task(targets_path, task);
  FoldAssignment folds = assign_folds(targets.places(), k, globals.seed);

  EvalResult eval;
  if (features_path.empty()) {
    eval = evaluate_baseline(targets, folds);
  } else {
    FeatureMatrix matrix = load_feature_matrix(features_path);
    eval = cross_validate(matrix, targets, folds, parse_models(models, globals.seed));
    eval.method = matrix.provenance == FeatureProvenance::implicit ? Method::imp_feature
                                                                   : Method::exp_feature;
  }
  eval.task_id = task_id;
  eval.seeds["fold_seed"] = globals.seed;
  if (!eval_out.empty()) save_eval(eval_out, eval);
  std::cout << eval_to_json(eval);
  return kExitOk;
}

std::vector<double> answer_values(const csv::Table& table) {
  auto col = table.column("target");
  if (!col) col = table.column("value");
  if (!col) fail(errc::missing_column, "target (or value)");
  std::vector<double> values;
  for (const auto& row : table.rows) {
    if (row.size() <= *col) continue;
    if (auto v = csv::parse_double(row[*col])) values.push_back(*v);
  }
  return values;
}

int cmd_detect_generic(const GlobalFlags& globals, const std::string& answers_path, int m,
                       double threshold) {
  csv::Table table = csv::read_file(answers_path);
  GenericValueReport report = detect_generic(answer_values(table), m, threshold);

  json doc{{"n", report.n},
           {"top_share", report.top_share},
           {"top_values", report.top_values},
           {"flagged", report.flagged},
           {"threshold", report.threshold}};
  doc["value_counts"] = json::array();
  for (const auto& [value, count] : report.value_counts) {
    doc["value_counts"].push_back({{"value", value}, {"count", count}});
  }
  std::string text = doc.dump(2) + "\n";
  if (!globals.out.empty()) {
    std::ofstream out(globals.out);
    out << text;
  }
  std::cout << text;
  return kExitOk;
}

int cmd_detect_variance(const GlobalFlags& globals, const std::string& answers_path,
                        double cv_threshold) {
  csv::Table table = csv::read_file(answers_path);
  auto place_col = table.column("place");
  if (!place_col) fail(errc::missing_column, "place");
  auto value_col = table.column("target");
  if (!value_col) value_col = table.column("value");
  if (!value_col) fail(errc::missing_column, "target (or value)");

  std::map<std::string, std::vector<double>> runs;
  for (const auto& row : table.rows) {
    if (row.size() <= std::max(*place_col, *value_col)) continue;
    if (auto v = csv::parse_double(row[*value_col])) runs[row[*place_col]].push_back(*v);
  }
  VarianceReport report = detect_variance(runs, cv_threshold);

  json doc{{"cv_threshold", report.cv_threshold}};
  doc["flagged_subjects"] = report.flagged_subjects;
  doc["undefined_cv"] = report.undefined_cv;
  doc["per_subject"] = json::object();
  for (const auto& [subject, sv] : report.per_subject) {
    json entry{{"mean", sv.mean}, {"std", sv.std_dev}};
    if (!std::isnan(sv.cv)) entry["cv"] = sv.cv;
    entry["rescaled_deviation"] = sv.rescaled_deviation;
    doc["per_subject"][subject] = entry;
  }
  std::string text = doc.dump(2) + "\n";
  if (!globals.out.empty()) {
    std::ofstream out(globals.out);
    out << text;
  }
  std::cout << text;
  return kExitOk;
}

int cmd_corr(const GlobalFlags& globals, const std::string& features_path,
             const std::string& targets_path) {
  FeatureMatrix matrix = load_feature_matrix(features_path);
  TaskSpec task;
  task.task_id = "corr";
  task.target_name = "corr";
  TargetTable targets = load_task(targets_path, task);

  // align rows with targets
  std::vector<size_t> rows;
  std::vector<double> y;
  for (size_t r = 0; r < matrix.rows(); ++r) {
    if (auto v = targets.value_of(matrix.places[r])) {
      rows.push_back(r);
      y.push_back(*v);
    }
  }
  if (rows.empty()) fail(errc::no_overlap, "no feature row has a target");

  csv::Table out_table;
  out_table.header = {"feature", "correlation", "p_value"};
  for (size_t c = 0; c < matrix.cols(); ++c) {
    std::vector<double> x;
    x.reserve(rows.size());
    for (size_t r : rows) x.push_back(matrix.at(r, c));
    CorrelationRow row = pearson(x, y);
    char r_buf[32], p_buf[32];
    std::snprintf(r_buf, sizeof(r_buf), "%.4f", row.r);
    std::snprintf(p_buf, sizeof(p_buf), "%.4f", row.p);
    out_table.rows.push_back({matrix.feature_names[c], r_buf, p_buf});
  }

  std::string text = csv::serialize(out_table);
  if (!globals.out.empty()) csv::write_file(globals.out, out_table);
  std::cout << text;
  return kExitOk;
}

int cmd_report(const GlobalFlags& globals, double baseline,
               const std::vector<std::string>& entries) {
  std::map<std::string, double> others;
  for (const auto& entry : entries) {
    auto eq = entry.find('=');
    if (eq == std::string::npos) {
      fail(errc::invalid_argument, "--rmse expects name=value, got '" + entry + "'");
    }
    auto value = csv::parse_double(entry.substr(eq + 1));
    if (!value) fail(errc::invalid_argument, "bad RMSE in '" + entry + "'");
    others[entry.substr(0, eq)] = *value;
  }
  auto table = relative_error_table(baseline, others);

  csv::Table out_table;
  out_table.header = {"model", "rmse", "relative_error"};
  for (const auto& [name, raw] : table) {
    out_table.rows.push_back({name, csv::format_double(others.at(name)), format_relative(raw)});
  }
  if (!globals.out.empty()) csv::write_file(globals.out, out_table);
  std::cout << csv::serialize(out_table);
  return kExitOk;
}

int cmd_rgb(const GlobalFlags& globals, const std::string& features_path, bool rescale) {
  FeatureMatrix matrix = load_feature_matrix(features_path);
  std::vector<RgbZone> zones = rgb_zones(matrix, rescale);
  const std::string out = globals.out.empty() ? "zones.csv" : globals.out;
  write_rgb_csv(out, zones);
  std::cout << "wrote " << out << " (" << zones.size() << " zones)\n";
  return kExitOk;
}

int cmd_histogram(const GlobalFlags& globals, const std::string& answers_path, double width,
                  std::optional<double> origin) {
  csv::Table table = csv::read_file(answers_path);
  auto bins = histogram_bins(answer_values(table), width, origin);
  const std::string base = globals.out.empty() ? "histogram" : globals.out;
  write_histogram_csv(base + ".csv", bins, width);
  write_histogram_svg(base + ".svg", bins, width);
  std::cout << "wrote " << base << ".csv and " << base << ".svg (" << bins.size() << " bins)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cityprobe - LLM city-knowledge extraction pipeline"};
  app.require_subcommand(1);

  GlobalFlags globals;
  app.add_option("--mode", globals.mode, "live|record|replay")->capture_default_str();
  app.add_option("--store", globals.store, "Record/replay JSONL store path");
  app.add_option("--lang", globals.lang, "Prompt language: en|zh")->capture_default_str();
  app.add_option("--seed", globals.seed, "Seed for folds/projection/models")
      ->capture_default_str();
  app.add_option("--out", globals.out, "Output path (file or directory, command-specific)");
  app.add_option("--templates", globals.templates_dir, "Template directory (default: built-in)");

  ProviderFlags provider;

  // ingest
  std::string task_path, data_path;
  bool normalize = false;
  auto* ingest = app.add_subcommand("ingest", "Load and clean a task dataset");
  ingest->add_option("--task", task_path, "Task meta JSON")->required();
  ingest->add_option("--data", data_path, "place,target CSV")->required();
  ingest->add_flag("--normalize", normalize, "Min-max scale region targets to [0,10]");

  // direct / extract / imp-run style commands
  std::string schema_path, manifest_path, models = "linear,tree,forest,gbt";
  int k = 5;
  int repeats = 1;
  auto* direct = app.add_subcommand("direct", "Direct-Ask evaluation");
  direct->add_option("--task", task_path, "Task meta JSON")->required();
  direct->add_option("--data", data_path, "place,target CSV")->required();
  direct->add_option("--repeats", repeats, "Answers per place (repeat probing)")
      ->check(CLI::PositiveNumber);
  direct->add_flag("--normalize", normalize, "Min-max scale region targets to [0,10]");
  provider.attach(direct);

  auto* extract = app.add_subcommand("extract", "Explicit-feature extraction and evaluation");
  extract->add_option("--task", task_path, "Task meta JSON")->required();
  extract->add_option("--data", data_path, "place,target CSV")->required();
  extract->add_option("--schema", schema_path, "Feature schema JSON")->required();
  extract->add_option("--k", k, "Cross-validation folds");
  extract->add_option("--models", models, "Comma list: linear,tree,forest,gbt");
  extract->add_flag("--normalize", normalize, "Min-max scale region targets to [0,10]");
  provider.attach(extract);

  auto* baseline = app.add_subcommand("baseline", "No-Feature mean baseline evaluation");
  baseline->add_option("--task", task_path, "Task meta JSON")->required();
  baseline->add_option("--data", data_path, "place,target CSV")->required();
  baseline->add_option("--k", k);
  baseline->add_flag("--normalize", normalize, "Min-max scale region targets to [0,10]");

  int id_count = 5;
  auto* identify = app.add_subcommand("identify", "Ask the model which features matter");
  identify->add_option("--task", task_path, "Task meta JSON")->required();
  identify->add_option("--count", id_count, "How many features to request")
      ->check(CLI::Range(1, 16));
  provider.attach(identify);

  size_t out_dim = 32;
  std::string features_out = "imp_features.json";
  auto* imp = app.add_subcommand("imp-features", "Pool + project hidden-state tensors");
  imp->add_option("--manifest", manifest_path, "place -> HST1 file manifest JSON")->required();
  imp->add_option("--out-dim", out_dim, "Projected feature count");
  imp->add_option("--features-out", features_out, "Output feature matrix path");

  std::string features_path, targets_path, train_task_id = "task", eval_out;
  auto* train = app.add_subcommand("train", "Cross-validate regressors on a feature matrix");
  train->add_option("--features", features_path, "Feature matrix JSON (omit for No-Feature)");
  train->add_option("--targets", targets_path, "place,target CSV")->required();
  train->add_option("--k", k);
  train->add_option("--models", models);
  train->add_option("--task-id", train_task_id);
  train->add_option("--eval-out", eval_out, "Where to write eval.json");

  auto* detect = app.add_subcommand("detect", "Knowledge detectors");
  detect->require_subcommand(1);
  std::string answers_path;
  int generic_m = 2;
  double generic_threshold = 0.5, cv_threshold = 0.2;
  auto* generic = detect->add_subcommand("generic", "Modal placeholder-value detector");
  generic->add_option("--answers", answers_path, "CSV with a target/value column")->required();
  generic->add_option("--m", generic_m, "Top buckets counted");
  generic->add_option("--threshold", generic_threshold, "Flagging share");
  auto* variance = detect->add_subcommand("variance", "Cross-generation variance detector");
  variance->add_option("--answers", answers_path, "CSV with place and target/value columns")
      ->required();
  variance->add_option("--cv-threshold", cv_threshold, "Flagging coefficient of variation");

  auto* corr = app.add_subcommand("corr", "Per-feature Pearson r and p-value table");
  corr->add_option("--features", features_path, "Feature matrix JSON")->required();
  corr->add_option("--targets", targets_path, "place,target CSV")->required();

  double report_baseline = 0.0;
  std::vector<std::string> report_entries;
  auto* report = app.add_subcommand("report", "Relative-error table against a baseline RMSE");
  report->add_option("--baseline", report_baseline, "Baseline RMSE")->required();
  report->add_option("--rmse", report_entries, "name=value (repeatable)")->required();

  bool rgb_rescale = false;
  auto* rgb = app.add_subcommand("rgb", "Emit zone RGB channels for map rendering");
  rgb->add_option("--features", features_path, "Matrix with residential/commercial/recreation")
      ->required();
  rgb->add_flag("--rescale", rgb_rescale, "Treat features as 0-10 and stretch to 0-255");

  double hist_width = 1.0;
  double hist_origin_value = 0.0;
  auto* hist = app.add_subcommand("histogram", "Bin answers into CSV + SVG");
  hist->add_option("--answers", answers_path, "CSV with a target/value column")->required();
  hist->add_option("--width", hist_width, "Bin width");
  auto* origin_opt = hist->add_option("--origin", hist_origin_value, "First bin lower edge");

  std::string rerun_manifest;
  auto* rerun = app.add_subcommand("rerun", "Re-execute a run from its manifest.json");
  rerun->add_option("--manifest", rerun_manifest, "manifest.json of a previous run")->required();

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();
  generic->fallthrough();
  variance->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(globals, task_path, data_path, normalize);
    if (*direct) {
      return cmd_run(globals, provider, Method::direct_ask, task_path, data_path, "", "", k, "",
                     normalize, repeats);
    }
    if (*extract) {
      return cmd_run(globals, provider, Method::exp_feature, task_path, data_path, schema_path,
                     "", k, models, normalize, 1);
    }
    if (*baseline) {
      return cmd_run(globals, provider, Method::no_feature, task_path, data_path, "", "", k, "",
                     normalize, 1);
    }
    if (*identify) {
      std::string out = globals.out.empty() ? "schema.json" : globals.out;
      return cmd_identify(globals, provider, task_path, id_count, out);
    }
    if (*imp) return cmd_imp_features(globals, manifest_path, out_dim, features_out);
    if (*train) return cmd_train(globals, features_path, targets_path, k, models, train_task_id,
                                 eval_out);
    if (*generic) return cmd_detect_generic(globals, answers_path, generic_m, generic_threshold);
    if (*variance) return cmd_detect_variance(globals, answers_path, cv_threshold);
    if (*corr) return cmd_corr(globals, features_path, targets_path);
    if (*report) return cmd_report(globals, report_baseline, report_entries);
    if (*rgb) return cmd_rgb(globals, features_path, rgb_rescale);
    if (*hist) {
      std::optional<double> origin;
      if (origin_opt->count() > 0) origin = hist_origin_value;
      return cmd_histogram(globals, answers_path, hist_width, origin);
    }
    if (*rerun) {
      std::string out = globals.out.empty() ? "rerun_" + run_timestamp() : globals.out;
      auto outcome = rerun_from_manifest(rerun_manifest, out);
      std::cout << eval_to_json(outcome.eval);
      std::cerr << "artifacts under " << out << "\n";
      return exit_code_for(outcome.drop_fraction);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitOk;
}

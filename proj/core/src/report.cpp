#include "cityprobe/report.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <thread>

#include <nlohmann/json.hpp>

#include "cityprobe/csv.hpp"
#include "cityprobe/diagnostics.hpp"
#include "cityprobe/error.hpp"
#include "cityprobe/features.hpp"
#include "cityprobe/parsing.hpp"

namespace cityprobe {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string iso8601_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct PlaceAnswer {
  bool ok = false;
  std::string error;
  std::string raw;
  ParsedFeatures features;
  ParsedDirect direct;
};

/// Queries every place with at most cfg.max_parallel in flight; results are
/// collected and post-processed in place order so output files stay
/// deterministic.
std::vector<PlaceAnswer> query_places(
    const std::vector<PlaceId>& places, const ProviderConfig& cfg, RecordStore* store,
    QueryMode mode, const std::function<RenderedPrompt(const PlaceId&)>& make_prompt,
    const std::function<void(const std::string&, PlaceAnswer&)>& parse, int repeat_index = 0) {
  std::vector<PlaceAnswer> answers(places.size());
  std::atomic<size_t> next{0};

  auto worker = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= places.size()) return;
      PlaceAnswer& slot = answers[i];
      try {
        RenderedPrompt prompt = make_prompt(places[i]);
        QueryRecord record = query(prompt, cfg, store, mode, repeat_index);
        slot.raw = record.raw_response;
        parse(record.raw_response, slot);
        slot.ok = true;
      } catch (const std::exception& e) {
        slot.ok = false;
        slot.error = e.what();
      }
    }
  };

  size_t workers = std::min<size_t>(std::max(cfg.max_parallel, 1), places.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return answers;
}

void write_rejects(const std::string& path, const std::vector<PlaceId>& places,
                   const std::vector<PlaceAnswer>& answers) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io_error, "cannot write " + path);
  for (size_t i = 0; i < places.size(); ++i) {
    if (answers[i].ok) continue;
    json line{{"place", places[i].rendered()},
              {"error", answers[i].error},
              {"raw_response", answers[i].raw}};
    out << line.dump() << '\n';
  }
}

json provider_to_json(const ProviderConfig& cfg) {
  return json{{"base_url", cfg.base_url},
              {"model_name", cfg.model_name},
              {"temperature", cfg.temperature},
              {"max_tokens", cfg.max_tokens},
              {"api_key_env", cfg.api_key_env},
              {"timeout_seconds", cfg.timeout_seconds},
              {"max_parallel", cfg.max_parallel},
              {"retries", cfg.retries}};
}

std::vector<RegressorSpec> effective_models(const RunOptions& options) {
  if (!options.models.empty()) return options.models;
  return {RegressorSpec::linear(), RegressorSpec::decision_tree(), RegressorSpec::random_forest(),
          RegressorSpec::gradient_boosting()};
}

json task_to_json(const TaskSpec& task) {
  json doc{{"task_id", task.task_id},
           {"target_name", task.target_name},
           {"unit", task.unit},
           {"level", task.level == TaskLevel::region ? "region" : "city"}};
  doc["places"] = json::array();
  for (const auto& place : task.places) doc["places"].push_back(place.rendered());
  if (task.scale_hint) doc["scale_hint"] = {task.scale_hint->first, task.scale_hint->second};
  return doc;
}

TaskSpec task_from_json(const json& doc) {
  TaskSpec task;
  task.task_id = doc.at("task_id").get<std::string>();
  task.target_name = doc.at("target_name").get<std::string>();
  task.unit = doc.value("unit", std::string{});
  task.level = doc.value("level", std::string{"city"}) == "region" ? TaskLevel::region
                                                                   : TaskLevel::city;
  for (const auto& place : doc.value("places", json::array())) {
    task.places.push_back(PlaceId::from_rendered(place.get<std::string>()));
  }
  if (doc.contains("scale_hint")) {
    task.scale_hint = std::make_pair(doc["scale_hint"].at(0).get<double>(),
                                     doc["scale_hint"].at(1).get<double>());
  }
  return task;
}

// Full-fidelity spec snapshot so a rerun trains the exact same models.
json model_to_json(const RegressorSpec& spec) {
  return json{{"kind", spec.name()},
              {"ridge_lambda", spec.ridge_lambda},
              {"max_depth", spec.max_depth},
              {"min_leaf", spec.min_leaf},
              {"n_trees", spec.n_trees},
              {"bootstrap", spec.bootstrap},
              {"mtry", spec.mtry},
              {"n_rounds", spec.n_rounds},
              {"learning_rate", spec.learning_rate},
              {"seed", spec.seed}};
}

RegressorSpec model_from_json(const json& doc) {
  std::string kind = doc.at("kind").get<std::string>();
  RegressorSpec spec;
  if (kind == "linear") {
    spec.kind = RegressorSpec::Kind::linear;
  } else if (kind == "decision_tree") {
    spec.kind = RegressorSpec::Kind::decision_tree;
  } else if (kind == "random_forest") {
    spec.kind = RegressorSpec::Kind::random_forest;
  } else if (kind == "gradient_boosting") {
    spec.kind = RegressorSpec::Kind::gradient_boosting;
  } else {
    fail(errc::format_error, "unknown model kind '" + kind + "'");
  }
  spec.ridge_lambda = doc.value("ridge_lambda", spec.ridge_lambda);
  spec.max_depth = doc.value("max_depth", spec.max_depth);
  spec.min_leaf = doc.value("min_leaf", spec.min_leaf);
  spec.n_trees = doc.value("n_trees", spec.n_trees);
  spec.bootstrap = doc.value("bootstrap", spec.bootstrap);
  spec.mtry = doc.value("mtry", spec.mtry);
  spec.n_rounds = doc.value("n_rounds", spec.n_rounds);
  spec.learning_rate = doc.value("learning_rate", spec.learning_rate);
  spec.seed = doc.value("seed", spec.seed);
  return spec;
}

}  // namespace

void save_manifest(const std::string& path, const RunManifest& manifest) {
  json models = json::array();
  for (const auto& spec : manifest.options.models) models.push_back(model_to_json(spec));

  json doc;
  doc["task_id"] = manifest.task_id;
  doc["method"] = manifest.method;
  doc["language"] = manifest.language;
  doc["mode"] = manifest.mode;
  doc["task"] = task_to_json(manifest.task);
  doc["provider"] = provider_to_json(manifest.provider);
  doc["options"] = {{"targets_csv", manifest.options.targets_csv},
                    {"normalize", manifest.options.normalize},
                    {"schema_json", manifest.options.schema_json},
                    {"manifest_json", manifest.options.manifest_json},
                    {"k", manifest.options.k},
                    {"out_dim", manifest.options.out_dim},
                    {"repeats", manifest.options.repeats},
                    {"models", models},
                    {"templates_dir", manifest.options.templates_dir},
                    {"store_path", manifest.options.store_path}};
  doc["seeds"] = manifest.seeds;
  doc["outputs"] = manifest.outputs;
  doc["started_at"] = manifest.started_at;
  doc["finished_at"] = manifest.finished_at;
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io_error, "cannot write " + path);
  out << doc.dump(2) << '\n';
}

RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) fail(errc::format_error, path);

  RunManifest manifest;
  manifest.task_id = doc.at("task_id").get<std::string>();
  manifest.method = doc.at("method").get<std::string>();
  manifest.language = doc.value("language", std::string{"en"});
  manifest.mode = doc.value("mode", std::string{"replay"});
  manifest.task = task_from_json(doc.at("task"));

  const json& provider = doc.at("provider");
  manifest.provider.base_url = provider.value("base_url", manifest.provider.base_url);
  manifest.provider.model_name = provider.value("model_name", manifest.provider.model_name);
  manifest.provider.temperature = provider.value("temperature", manifest.provider.temperature);
  manifest.provider.max_tokens = provider.value("max_tokens", manifest.provider.max_tokens);
  manifest.provider.api_key_env = provider.value("api_key_env", manifest.provider.api_key_env);
  manifest.provider.timeout_seconds =
      provider.value("timeout_seconds", manifest.provider.timeout_seconds);
  manifest.provider.max_parallel = provider.value("max_parallel", manifest.provider.max_parallel);
  manifest.provider.retries = provider.value("retries", manifest.provider.retries);

  const json& options = doc.at("options");
  manifest.options.targets_csv = options.value("targets_csv", std::string{});
  manifest.options.normalize = options.value("normalize", false);
  manifest.options.schema_json = options.value("schema_json", std::string{});
  manifest.options.manifest_json = options.value("manifest_json", std::string{});
  manifest.options.k = options.value("k", 5);
  manifest.options.out_dim = options.value("out_dim", size_t{32});
  manifest.options.repeats = options.value("repeats", 1);
  manifest.options.templates_dir = options.value("templates_dir", std::string{});
  manifest.options.store_path = options.value("store_path", std::string{});
  for (const auto& model : options.value("models", json::array())) {
    manifest.options.models.push_back(model_from_json(model));
  }
  manifest.options.language = language_from_flag(manifest.language);
  manifest.options.mode = query_mode_from_flag(manifest.mode);

  manifest.seeds = doc.value("seeds", std::map<std::string, uint64_t>{});
  manifest.options.fold_seed = manifest.seeds.count("fold_seed") ? manifest.seeds.at("fold_seed") : 0;
  if (manifest.seeds.count("projection_seed")) {
    manifest.options.projection_seed = manifest.seeds.at("projection_seed");
  }
  manifest.outputs = doc.value("outputs", std::map<std::string, std::string>{});
  manifest.started_at = doc.value("started_at", std::string{});
  manifest.finished_at = doc.value("finished_at", std::string{});
  return manifest;
}

RunOutcome rerun_from_manifest(const std::string& manifest_path, const std::string& out_dir) {
  RunManifest manifest = load_manifest(manifest_path);
  RunOptions options = manifest.options;
  options.out_dir = out_dir;
  return run_method(manifest.task, method_from_flag(manifest.method), manifest.provider, options);
}

RunOutcome run_method(const TaskSpec& task, Method method, const ProviderConfig& cfg,
                      const RunOptions& options) {
  if (options.out_dir.empty()) fail(errc::invalid_argument, "out_dir is required");
  if (options.targets_csv.empty()) fail(errc::invalid_argument, "targets_csv is required");
  fs::create_directories(options.out_dir);
  const std::string out = options.out_dir + "/";

  RunOutcome outcome;
  RunManifest& manifest = outcome.manifest;
  manifest.task_id = task.task_id;
  manifest.method = std::string(to_string(method));
  manifest.language = std::string(to_string(options.language));
  manifest.mode = std::string(to_string(options.mode));
  manifest.provider = cfg;
  manifest.options = options;
  manifest.started_at = iso8601_now();
  manifest.seeds["fold_seed"] = options.fold_seed;

  // bind places from the data file when the task does not list them
  TargetTable targets = load_task(options.targets_csv, task);
  TaskSpec bound = task;
  if (bound.places.empty()) bound.places = targets.places();
  manifest.task = bound;
  if (options.normalize) {
    if (task.level != TaskLevel::region) {
      fail(errc::invalid_argument, "normalization applies to region-level tasks only");
    }
    targets = normalize_region_targets(targets);
  }

  const TemplateSet templates =
      options.templates_dir.empty() ? TemplateSet::builtin(options.language)
                                    : TemplateSet::load(options.templates_dir, options.language);

  // only the querying methods touch the store
  const bool queries = method == Method::direct_ask || method == Method::exp_feature;
  std::unique_ptr<RecordStore> store;
  if (queries && options.mode != QueryMode::live) {
    if (options.store_path.empty()) fail(errc::invalid_argument, "record/replay needs --store");
    store = std::make_unique<RecordStore>(options.store_path);
  }

  EvalResult& eval = outcome.eval;
  const std::vector<PlaceId> place_order = targets.places();

  switch (method) {
    case Method::no_feature: {
      FoldAssignment folds = assign_folds(place_order, options.k, options.fold_seed);
      eval = evaluate_baseline(targets, folds);
      break;
    }
    case Method::direct_ask: {
      const int repeats = std::max(options.repeats, 1);
      std::map<std::string, ParsedDirect> parsed;  // repeat 0, used for the eval
      csv::Table table;
      table.header = {"place", "repeat", "target", "zone"};
      std::vector<PlaceAnswer> first_answers(place_order.size());
      size_t failures = 0;

      for (int repeat = 0; repeat < repeats; ++repeat) {
        auto answers = query_places(
            place_order, cfg, store.get(), options.mode,
            [&](const PlaceId& p) { return build_direct_prompt(p, bound, templates); },
            [&](const std::string& raw, PlaceAnswer& slot) { slot.direct = parse_direct(raw); },
            repeat);
        for (size_t i = 0; i < place_order.size(); ++i) {
          if (!answers[i].ok) {
            if (repeat == 0) ++failures;
            continue;
          }
          if (repeat == 0) parsed[place_order[i].rendered()] = answers[i].direct;
          table.rows.push_back({place_order[i].rendered(), std::to_string(repeat),
                                csv::format_double(answers[i].direct.pred),
                                answers[i].direct.zone});
        }
        if (repeat == 0) first_answers = answers;
      }

      write_rejects(out + "rejects.jsonl", place_order, first_answers);
      csv::write_file(out + "answers.csv", table);
      manifest.outputs["answers"] = out + "answers.csv";
      eval = evaluate_direct(parsed, targets);
      eval.drop_counts["parse_failures"] = failures;
      outcome.drop_fraction =
          static_cast<double>(failures) / static_cast<double>(place_order.size());
      break;
    }
    case Method::exp_feature: {
      if (options.schema_json.empty()) fail(errc::invalid_argument, "ExpFeature needs a schema");
      FeatureSchema schema = load_schema(options.schema_json);
      auto answers = query_places(
          place_order, cfg, store.get(), options.mode,
          [&](const PlaceId& p) { return build_extraction_prompt(p, schema, templates); },
          [&](const std::string& raw, PlaceAnswer& slot) {
            slot.features = parse_features(raw, schema);
          });
      std::map<std::string, ParsedFeatures> parsed;
      size_t failures = 0;
      size_t clamped = 0;
      for (size_t i = 0; i < place_order.size(); ++i) {
        if (!answers[i].ok) {
          ++failures;
          continue;
        }
        clamped += answers[i].features.clamped.size();
        parsed[place_order[i].rendered()] = answers[i].features;
      }
      write_rejects(out + "rejects.jsonl", place_order, answers);
      if (parsed.empty()) fail(errc::empty_matrix, "every answer failed to parse");

      FeatureMatrix matrix = assemble_explicit(parsed, schema, place_order);
      save_feature_matrix(out + "features.json", matrix);
      manifest.outputs["features"] = out + "features.json";

      // folds over the surviving places; identical to the target order when
      // nothing was dropped
      FoldAssignment folds = assign_folds(matrix.places, options.k, options.fold_seed);
      eval = cross_validate(matrix, targets, folds, effective_models(options));
      eval.method = Method::exp_feature;
      eval.drop_counts["parse_failures"] = failures;
      eval.drop_counts["clamped_values"] = clamped;
      outcome.drop_fraction =
          static_cast<double>(failures) / static_cast<double>(place_order.size());
      break;
    }
    case Method::imp_feature: {
      if (options.manifest_json.empty()) {
        fail(errc::invalid_argument, "ImpFeature needs a hidden-state manifest");
      }
      std::vector<HiddenStateTensor> tensors = load_hidden_states(options.manifest_json);
      // keep tensors with ground truth, in target place order
      std::vector<HiddenStateTensor> usable;
      for (const PlaceId& place : place_order) {
        auto it = std::find_if(tensors.begin(), tensors.end(), [&](const HiddenStateTensor& t) {
          return t.place == place;
        });
        if (it != tensors.end()) usable.push_back(std::move(*it));
      }
      if (usable.empty()) fail(errc::no_overlap, "no tensor matches a target place");
      manifest.seeds["projection_seed"] = options.projection_seed;

      FeatureMatrix matrix = assemble_implicit(usable, options.out_dim, options.projection_seed);
      matrix.omitted_places = place_order.size() - usable.size();
      save_feature_matrix(out + "features.json", matrix);
      manifest.outputs["features"] = out + "features.json";
      std::ofstream(out + "rejects.jsonl");  // empty: nothing parsed on this path

      FoldAssignment folds = assign_folds(matrix.places, options.k, options.fold_seed);
      eval = cross_validate(matrix, targets, folds, effective_models(options));
      eval.method = Method::imp_feature;
      eval.drop_counts["missing_tensors"] = matrix.omitted_places;
      outcome.drop_fraction =
          static_cast<double>(matrix.omitted_places) / static_cast<double>(place_order.size());
      break;
    }
  }

  eval.task_id = task.task_id;
  eval.method = method;
  eval.seeds["fold_seed"] = options.fold_seed;
  if (method == Method::imp_feature) eval.seeds["projection_seed"] = options.projection_seed;
  eval.notes.push_back(std::string("normalize=") + (options.normalize ? "on" : "off"));
  if (method == Method::exp_feature || method == Method::imp_feature) {
    std::string models = "models=";
    for (const auto& spec : effective_models(options)) models += spec.name() + ",";
    models.pop_back();
    eval.notes.push_back(models);
  }

  if (method == Method::exp_feature || method == Method::imp_feature) {
    manifest.options.models = effective_models(options);  // snapshot defaults for reruns
  }

  save_eval(out + "eval.json", eval);
  manifest.outputs["eval"] = out + "eval.json";
  manifest.outputs["rejects"] = out + "rejects.jsonl";
  manifest.finished_at = iso8601_now();
  save_manifest(out + "manifest.json", manifest);
  return outcome;
}

std::vector<HistogramBin> histogram_bins(const std::vector<double>& values, double bin_width,
                                         std::optional<double> origin) {
  if (values.empty()) fail(errc::empty_input, "no values to bin");
  if (!(bin_width > 0.0)) fail(errc::invalid_argument, "bin width must be > 0");

  double lo = *std::min_element(values.begin(), values.end());
  double start = origin ? *origin : std::floor(lo / bin_width) * bin_width;
  if (lo < start) fail(errc::invalid_argument, "origin above minimum value");

  size_t n_bins = 0;
  std::vector<size_t> counts;
  for (double v : values) {
    auto index = static_cast<size_t>(std::floor((v - start) / bin_width));
    if (index + 1 > n_bins) {
      n_bins = index + 1;
      counts.resize(n_bins, 0);
    }
    ++counts[index];
  }

  std::vector<HistogramBin> bins(n_bins);
  for (size_t i = 0; i < n_bins; ++i) {
    bins[i].lower = start + static_cast<double>(i) * bin_width;
    bins[i].count = counts[i];
  }
  return bins;
}

void write_histogram_csv(const std::string& path, const std::vector<HistogramBin>& bins,
                         double bin_width) {
  csv::Table table;
  table.header = {"bin_lower", "bin_upper", "count"};
  for (const auto& bin : bins) {
    table.rows.push_back({csv::format_double(bin.lower),
                          csv::format_double(bin.lower + bin_width),
                          std::to_string(bin.count)});
  }
  csv::write_file(path, table);
}

std::string histogram_svg(const std::vector<HistogramBin>& bins, double bin_width) {
  constexpr int kWidth = 640, kHeight = 360, kPad = 40;
  size_t peak = 1;
  for (const auto& bin : bins) peak = std::max(peak, bin.count);

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) +
         "\" height=\"" + std::to_string(kHeight) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  const double plot_w = kWidth - 2.0 * kPad;
  const double plot_h = kHeight - 2.0 * kPad;
  const double bar_w = plot_w / static_cast<double>(bins.size());
  for (size_t i = 0; i < bins.size(); ++i) {
    if (bins[i].count == 0) continue;
    double h = plot_h * static_cast<double>(bins[i].count) / static_cast<double>(peak);
    double x = kPad + static_cast<double>(i) * bar_w;
    double y = kHeight - kPad - h;
    svg += "<rect x=\"" + csv::format_double(x) + "\" y=\"" + csv::format_double(y) +
           "\" width=\"" + csv::format_double(std::max(bar_w - 1.0, 0.5)) + "\" height=\"" +
           csv::format_double(h) + "\" fill=\"#4472c4\"/>\n";
  }
  // axis + extent labels
  svg += "<line x1=\"" + std::to_string(kPad) + "\" y1=\"" + std::to_string(kHeight - kPad) +
         "\" x2=\"" + std::to_string(kWidth - kPad) + "\" y2=\"" +
         std::to_string(kHeight - kPad) + "\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + std::to_string(kPad) + "\" y=\"" + std::to_string(kHeight - kPad + 16) +
         "\" font-size=\"12\">" + csv::format_double(bins.front().lower) + "</text>\n";
  svg += "<text x=\"" + std::to_string(kWidth - kPad) + "\" y=\"" +
         std::to_string(kHeight - kPad + 16) + "\" font-size=\"12\" text-anchor=\"end\">" +
         csv::format_double(bins.back().lower + bin_width) + "</text>\n";
  svg += "<text x=\"" + std::to_string(kPad - 4) + "\" y=\"" + std::to_string(kPad) +
         "\" font-size=\"12\" text-anchor=\"end\">" + std::to_string(peak) + "</text>\n";
  svg += "</svg>\n";
  return svg;
}

void write_histogram_svg(const std::string& path, const std::vector<HistogramBin>& bins,
                         double bin_width) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io_error, "cannot write " + path);
  out << histogram_svg(bins, bin_width);
}

std::vector<RgbZone> rgb_zones(const FeatureMatrix& features, bool rescale) {
  const std::array<std::string, 3> channels = {"residential", "commercial", "recreation"};
  std::array<size_t, 3> columns{};
  for (size_t c = 0; c < channels.size(); ++c) {
    auto it = std::find(features.feature_names.begin(), features.feature_names.end(), channels[c]);
    if (it == features.feature_names.end()) fail(errc::missing_column, channels[c]);
    columns[c] = static_cast<size_t>(it - features.feature_names.begin());
  }

  auto to_channel = [&](double value) {
    if (rescale) value *= 25.5;
    long rounded = std::lround(value);
    return static_cast<int>(std::clamp(rounded, 0L, 255L));
  };

  std::vector<RgbZone> zones;
  zones.reserve(features.rows());
  for (size_t row = 0; row < features.rows(); ++row) {
    zones.push_back(RgbZone{features.places[row], to_channel(features.at(row, columns[0])),
                            to_channel(features.at(row, columns[1])),
                            to_channel(features.at(row, columns[2]))});
  }
  return zones;
}

void write_rgb_csv(const std::string& path, const std::vector<RgbZone>& zones) {
  csv::Table table;
  table.header = {"zone", "r", "g", "b"};
  for (const auto& z : zones) {
    table.rows.push_back(
        {z.zone.rendered(), std::to_string(z.r), std::to_string(z.g), std::to_string(z.b)});
  }
  csv::write_file(path, table);
}

}  // namespace cityprobe

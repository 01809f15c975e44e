#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cityprobe/gateway.hpp"
#include "cityprobe/ml.hpp"

namespace cityprobe {

struct RunOptions {
  std::string targets_csv;    // ground truth, always required
  bool normalize = false;     // min-max region targets to [0,10] before eval
  std::string schema_json;    // ExpFeature: feature schema
  std::string manifest_json;  // ImpFeature: place -> HST1 file map
  int k = 5;
  uint64_t fold_seed = 0;
  size_t out_dim = 32;
  uint64_t projection_seed = 0;
  int repeats = 1;  // DirectAsk: answers per place; repeats > 1 feed detect variance
  std::vector<RegressorSpec> models;  // empty: linear, tree, forest, gbt
  PromptLanguage language = PromptLanguage::english;
  std::string templates_dir;  // empty: compiled-in templates
  std::string out_dir;        // artifacts land here; created if missing
  QueryMode mode = QueryMode::replay;
  std::string store_path;
};

/// Everything needed to replay the run byte-identically: task snapshot,
/// configuration, seeds, store path, and where each artifact was written.
struct RunManifest {
  std::string task_id;
  std::string method;
  std::string language;
  std::string mode;
  TaskSpec task;
  ProviderConfig provider;
  RunOptions options;
  std::map<std::string, uint64_t> seeds;
  std::map<std::string, std::string> outputs;
  std::string started_at;
  std::string finished_at;
};

void save_manifest(const std::string& path, const RunManifest& manifest);
RunManifest load_manifest(const std::string& path);

struct RunOutcome {
  EvalResult eval;
  RunManifest manifest;
  /// Share of target places that produced no usable answer (parse failures
  /// plus unanswered); 0 for NoFeature.
  double drop_fraction = 0.0;
};

/// Full chain for one method: prompt -> gateway -> parse -> features ->
/// ml / direct eval. Writes eval.json, manifest.json, rejects.jsonl, and
/// the method's intermediates under options.out_dir.
RunOutcome run_method(const TaskSpec& task, Method method, const ProviderConfig& cfg,
                      const RunOptions& options);

/// Re-executes a persisted run. In replay mode with the same store this
/// reproduces eval.json byte-for-byte.
RunOutcome rerun_from_manifest(const std::string& manifest_path, const std::string& out_dir);

// --- plot-ready emissions -------------------------------------------------

struct HistogramBin {
  double lower = 0.0;  // bin covers [lower, lower + width)
  size_t count = 0;
};

/// Fixed-width binning including empty bins between min and max. `origin`
/// defaults to floor(min / width) * width.
std::vector<HistogramBin> histogram_bins(const std::vector<double>& values, double bin_width,
                                         std::optional<double> origin = std::nullopt);

void write_histogram_csv(const std::string& path, const std::vector<HistogramBin>& bins,
                         double bin_width);

/// Static SVG bar chart, no external renderer.
std::string histogram_svg(const std::vector<HistogramBin>& bins, double bin_width);
void write_histogram_svg(const std::string& path, const std::vector<HistogramBin>& bins,
                         double bin_width);

struct RgbZone {
  PlaceId zone;
  int r = 0;
  int g = 0;
  int b = 0;
};

/// Maps the residential/commercial/recreation columns to RGB channels.
/// With `rescale` the 0-10 feature scale is stretched by 25.5 first;
/// channels are rounded then clamped to [0, 255].
std::vector<RgbZone> rgb_zones(const FeatureMatrix& features, bool rescale);

/// CSV `zone,r,g,b` for external GIS tooling.
void write_rgb_csv(const std::string& path, const std::vector<RgbZone>& zones);

}  // namespace cityprobe

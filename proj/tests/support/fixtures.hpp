// Deterministic on-disk fixtures: synthetic tasks, replay stores whose
// "answers" come from a known generative law, and HST1 tensor sets.
#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "cityprobe/csv.hpp"
#include "cityprobe/dataset.hpp"
#include "cityprobe/features.hpp"
#include "cityprobe/gateway.hpp"
#include "cityprobe/prompting.hpp"
#include "cityprobe/rng.hpp"
#include "cityprobe/schema.hpp"

namespace fixtures {

/// Fresh scratch directory under the system temp root.
inline std::string scratch_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("cityprobe_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

struct SyntheticExpTask {
  cityprobe::TaskSpec task;
  cityprobe::FeatureSchema schema;
  std::string targets_csv;
  std::string schema_json;
  std::string store_path;
  std::vector<double> truth;  // targets in place order
};

/// y = 3*f1 - 2*f2 + N(0, 0.1); f3/f4 are noise features. The replay store
/// answers every extraction prompt with the generating feature values, so
/// the pipeline sees an "LLM" whose knowledge is exact.
inline SyntheticExpTask make_synthetic_exp_task(const std::string& dir, uint64_t seed,
                                                size_t n_places,
                                                const cityprobe::ProviderConfig& cfg) {
  using namespace cityprobe;

  SyntheticExpTask fixture;
  fixture.task.task_id = "synthetic_" + std::to_string(seed);
  fixture.task.target_name = "Synthetic Index";
  fixture.task.unit = "points";
  fixture.task.level = TaskLevel::city;

  fixture.schema.scale_low = 0.0;
  fixture.schema.scale_high = 10.0;
  fixture.schema.features = {{"f1", "first signal"},
                             {"f2", "second signal"},
                             {"f3", "noise channel"},
                             {"f4", "another noise channel"}};

  std::mt19937_64 rng(seed);
  auto uniform01 = [&rng]() { return cityprobe::unit_uniform(rng); };
  auto gaussian = [&]() {
    double u1 = uniform01();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  };

  fixture.targets_csv = dir + "/targets_" + std::to_string(seed) + ".csv";
  fixture.schema_json = dir + "/schema_" + std::to_string(seed) + ".json";
  fixture.store_path = dir + "/store_" + std::to_string(seed) + ".jsonl";
  std::filesystem::remove(fixture.store_path);

  save_schema(fixture.schema_json, fixture.schema);

  csv::Table targets;
  targets.header = {"place", "target"};
  RecordStore store(fixture.store_path);

  for (size_t i = 0; i < n_places; ++i) {
    char name[24];
    std::snprintf(name, sizeof(name), "p%03zu", i);
    PlaceId place{name, "Testland"};
    fixture.task.places.push_back(place);

    double f1 = 10.0 * uniform01();
    double f2 = 10.0 * uniform01();
    double f3 = 10.0 * uniform01();
    double f4 = 10.0 * uniform01();
    double y = 3.0 * f1 - 2.0 * f2 + 0.1 * gaussian();
    fixture.truth.push_back(y);
    targets.rows.push_back({place.rendered(), csv::format_double(y)});

    RenderedPrompt prompt = build_extraction_prompt(place, fixture.schema,
                                                    PromptLanguage::english);
    QueryRecord record;
    record.fingerprint = request_fingerprint(cfg.model_name, cfg.temperature, prompt.text, 0);
    record.prompt = prompt.text;
    record.provider = cfg.model_name;
    record.timestamp = "1970-01-01T00:00:00Z";
    record.raw_response = std::string("Here are the scores:\n```json\n") + "{\"f1\": " +
                          csv::format_double(f1) + ", \"f2\": " + csv::format_double(f2) +
                          ", \"f3\": " + csv::format_double(f3) + ", \"f4\": " +
                          csv::format_double(f4) + "}\n```\n";
    store.append(record);
  }
  csv::write_file(fixture.targets_csv, targets);
  return fixture;
}

struct HiddenStateFixture {
  std::string manifest_json;
  std::string targets_csv;
  cityprobe::TaskSpec task;
  std::vector<cityprobe::HiddenStateTensor> tensors;
};

/// A few random HST1 tensors plus the manifest and a matching target file.
inline HiddenStateFixture make_hidden_state_fixture(const std::string& dir, uint64_t seed,
                                                    size_t n_places, uint32_t tokens,
                                                    uint32_t hidden_dim) {
  using namespace cityprobe;

  HiddenStateFixture fixture;
  fixture.task.task_id = "hst_fixture";
  fixture.task.target_name = "Activation Index";
  fixture.manifest_json = dir + "/manifest.json";
  fixture.targets_csv = dir + "/hst_targets.csv";

  std::mt19937_64 rng(seed);
  csv::Table targets;
  targets.header = {"place", "target"};

  std::ofstream manifest(fixture.manifest_json);
  manifest << "{\n";
  for (size_t i = 0; i < n_places; ++i) {
    char name[24];
    std::snprintf(name, sizeof(name), "z%02zu", i);
    PlaceId place{name, "Testland"};
    fixture.task.places.push_back(place);

    HiddenStateTensor tensor;
    tensor.place = place;
    tensor.n_tokens = tokens;
    tensor.hidden_dim = hidden_dim;
    tensor.data.resize(size_t(tokens) * hidden_dim);
    for (auto& v : tensor.data) {
      v = static_cast<float>(2.0 * cityprobe::unit_uniform(rng) - 1.0);
    }
    std::string file = dir + "/" + std::string(name) + ".hst";
    write_hst(file, tensor);
    fixture.tensors.push_back(tensor);

    manifest << "  \"" << place.rendered() << "\": \"" << std::string(name) + ".hst" << "\"";
    manifest << (i + 1 < n_places ? ",\n" : "\n");

    targets.rows.push_back({place.rendered(),
                            csv::format_double(static_cast<double>(i) + 1.0)});
  }
  manifest << "}\n";
  manifest.close();
  csv::write_file(fixture.targets_csv, targets);
  return fixture;
}

}  // namespace fixtures

// cityprobe-synth - builds a fully offline demo workspace: a synthetic
// task whose answers come from a known law, a replay store covering the
// direct/identify/extract prompts, hidden-state tensors, and an RGB
// feature matrix. Everything cityprobe does can then run with
// --mode replay against the generated store.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cityprobe/csv.hpp"
#include "cityprobe/dataset.hpp"
#include "cityprobe/features.hpp"
#include "cityprobe/gateway.hpp"
#include "cityprobe/prompting.hpp"
#include "cityprobe/rng.hpp"
#include "cityprobe/schema.hpp"

using namespace cityprobe;
using nlohmann::json;

namespace {

struct Law {
  double f1, f2, f3, f4;
  double y;
};

QueryRecord make_record(const ProviderConfig& cfg, const RenderedPrompt& prompt,
                        const std::string& response, int repeat = 0) {
  QueryRecord record;
  record.fingerprint = request_fingerprint(cfg.model_name, cfg.temperature, prompt.text, repeat);
  record.prompt = prompt.text;
  record.provider = cfg.model_name;
  record.timestamp = "1970-01-01T00:00:00Z";
  record.repeat_index = repeat;
  record.raw_response = response;
  return record;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cityprobe-synth - generate an offline demo workspace"};
  std::string out_dir = "demo";
  uint64_t seed = 7;
  size_t n_places = 30;
  int repeats = 5;
  std::string model = "gpt-4o";
  app.add_option("--out", out_dir, "Workspace directory")->capture_default_str();
  app.add_option("--seed", seed, "Generator seed")->capture_default_str();
  app.add_option("--places", n_places, "Number of synthetic places")->capture_default_str();
  app.add_option("--repeats", repeats, "Stored repeat answers per direct prompt")
      ->capture_default_str();
  app.add_option("--model", model, "Model name baked into the store fingerprints")
      ->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  std::filesystem::create_directories(out_dir);
  std::filesystem::create_directories(out_dir + "/hst");

  ProviderConfig cfg;
  cfg.model_name = model;

  TaskSpec task;
  task.task_id = "synthetic_demo";
  task.target_name = "Composite Activity Index";
  task.unit = "points";
  task.level = TaskLevel::city;

  FeatureSchema schema;
  schema.features = {{"f1", "first signal channel"},
                     {"f2", "second signal channel"},
                     {"f3", "noise channel"},
                     {"f4", "another noise channel"}};

  std::mt19937_64 rng(seed);
  auto uniform01 = [&rng]() { return unit_uniform(rng); };
  auto gaussian = [&]() {
    double u1 = uniform01(), u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  };

  const std::string store_path = out_dir + "/store.jsonl";
  std::filesystem::remove(store_path);
  RecordStore store(store_path);

  csv::Table targets;
  targets.header = {"place", "target"};

  std::ofstream manifest(out_dir + "/hst/manifest.json");
  manifest << "{\n";

  for (size_t i = 0; i < n_places; ++i) {
    char name[24];
    std::snprintf(name, sizeof(name), "place%03zu", i);
    PlaceId place{name, "Synthland"};
    task.places.push_back(place);

    Law law;
    law.f1 = 10.0 * uniform01();
    law.f2 = 10.0 * uniform01();
    law.f3 = 10.0 * uniform01();
    law.f4 = 10.0 * uniform01();
    law.y = 3.0 * law.f1 - 2.0 * law.f2 + 0.1 * gaussian();
    targets.rows.push_back({place.rendered(), csv::format_double(law.y)});

    // extraction answer: the generating feature values, wrapped in prose
    auto extract_prompt = build_extraction_prompt(place, schema, PromptLanguage::english);
    json features{{"f1", law.f1}, {"f2", law.f2}, {"f3", law.f3}, {"f4", law.f4}};
    store.append(make_record(cfg, extract_prompt,
                             "Here are the scores:\n```json\n" + features.dump() + "\n```\n"));

    // direct answers: close to truth, with per-repeat jitter so the
    // variance detector has something to look at
    auto direct_prompt = build_direct_prompt(place, task, PromptLanguage::english);
    for (int repeat = 0; repeat < repeats; ++repeat) {
      double jitter = (repeat == 0) ? 0.0 : 0.5 * gaussian();
      json answer{{"zone", place.rendered()}, {"pred", law.y + jitter}};
      store.append(make_record(cfg, direct_prompt, answer.dump(), repeat));
    }

    // hidden states: token activations correlated with the target
    HiddenStateTensor tensor;
    tensor.place = place;
    tensor.n_tokens = 12;
    tensor.hidden_dim = 64;
    tensor.data.resize(size_t(12) * 64);
    for (auto& v : tensor.data) {
      v = static_cast<float>(0.05 * law.y + 0.3 * gaussian());
    }
    std::string hst_name = std::string(name) + ".hst";
    write_hst(out_dir + "/hst/" + hst_name, tensor);
    manifest << "  \"" << place.rendered() << "\": \"" << hst_name << "\""
             << (i + 1 < n_places ? ",\n" : "\n");
  }
  manifest << "}\n";
  manifest.close();

  // identification answer for the default --count 5
  auto identify_prompt = build_identification_prompt(task, 5, PromptLanguage::english);
  json identified{{"features", json::array({json{{"name", "f1"}, {"description", "first signal channel"}},
                                            json{{"name", "f2"}, {"description", "second signal channel"}},
                                            json{{"name", "f3"}, {"description", "noise channel"}},
                                            json{{"name", "f4"}, {"description", "another noise channel"}},
                                            json{{"name", "f5"}, {"description", "spare channel"}}})}};
  store.append(make_record(cfg, identify_prompt, identified.dump()));

  csv::write_file(out_dir + "/targets.csv", targets);
  save_schema(out_dir + "/schema.json", schema);

  json task_doc{{"task_id", task.task_id},
                {"target_name", task.target_name},
                {"unit", task.unit},
                {"level", "city"}};
  std::ofstream(out_dir + "/task.json") << task_doc.dump(2) << "\n";

  // zone features on a 0-10 scale for the rgb command
  FeatureMatrix rgb;
  rgb.feature_names = {"residential", "commercial", "recreation"};
  for (int i = 0; i < 12; ++i) {
    rgb.places.push_back(PlaceId{"zone" + std::to_string(i), "Synthland"});
    rgb.values.push_back(10.0 * uniform01());
    rgb.values.push_back(10.0 * uniform01());
    rgb.values.push_back(10.0 * uniform01());
  }
  save_feature_matrix(out_dir + "/rgb_features.json", rgb);

  std::cout << "wrote " << out_dir << "/: task.json targets.csv schema.json store.jsonl ("
            << store.size() << " records) hst/ rgb_features.json\n";
  return 0;
}
